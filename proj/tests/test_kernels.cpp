#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "optfs/common.hpp"
#include "optfs/kernels.hpp"

using namespace optfs;
namespace k = optfs::kernels;

namespace {

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-2.0, 2.0);
    return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() &&
           std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct ModeGuard {
    k::Mode saved = k::mode();
    ~ModeGuard() { k::set_mode(saved); }
};

}  // namespace

TEST_CASE("serial and parallel kernels are bit-identical") {
    ModeGuard guard;
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const int rows = 1 + static_cast<int>(rng.uniform_index(40));
        const int inner = 1 + static_cast<int>(rng.uniform_index(30));
        const int cols = 1 + static_cast<int>(rng.uniform_index(20));
        auto a = random_vec(static_cast<size_t>(rows) * inner, rng);
        auto b = random_vec(static_cast<size_t>(inner) * cols, rng);
        auto dout = random_vec(static_cast<size_t>(rows) * cols, rng);
        auto s = random_vec(rows, rng);

        std::vector<double> c1(static_cast<size_t>(rows) * cols), c2 = c1;
        std::vector<double> da1(a.size(), 0.0), da2 = da1;
        std::vector<double> db1(b.size(), 0.0), db2 = db1;
        std::vector<double> sr1(static_cast<size_t>(rows) * inner), sr2 = sr1;

        k::set_mode(k::Mode::Serial);
        k::matmul(a.data(), b.data(), c1.data(), rows, inner, cols);
        k::matmul_grad_a(dout.data(), b.data(), da1.data(), rows, inner, cols);
        k::matmul_grad_b(dout.data(), a.data(), db1.data(), rows, inner, cols);
        k::scale_rows(a.data(), s.data(), sr1.data(), rows, inner);
        const double sum1 = k::reduce_sum(a.data(), a.size());

        k::set_mode(k::Mode::Parallel);
        k::matmul(a.data(), b.data(), c2.data(), rows, inner, cols);
        k::matmul_grad_a(dout.data(), b.data(), da2.data(), rows, inner, cols);
        k::matmul_grad_b(dout.data(), a.data(), db2.data(), rows, inner, cols);
        k::scale_rows(a.data(), s.data(), sr2.data(), rows, inner);
        const double sum2 = k::reduce_sum(a.data(), a.size());

        CHECK(bit_equal(c1, c2));
        CHECK(bit_equal(da1, da2));
        CHECK(bit_equal(db1, db2));
        CHECK(bit_equal(sr1, sr2));
        CHECK(sum1 == sum2);
    }
}

TEST_CASE("elementwise kernels match in both modes") {
    ModeGuard guard;
    Rng rng(11);
    auto x = random_vec(10000, rng);
    auto y = random_vec(10000, rng);
    std::vector<double> o1(x.size()), o2(x.size());

    k::set_mode(k::Mode::Serial);
    k::sigmoid(x.data(), o1.data(), x.size());
    k::set_mode(k::Mode::Parallel);
    k::sigmoid(x.data(), o2.data(), x.size());
    CHECK(bit_equal(o1, o2));

    k::set_mode(k::Mode::Serial);
    k::mul(x.data(), y.data(), o1.data(), x.size());
    k::set_mode(k::Mode::Parallel);
    k::mul(x.data(), y.data(), o2.data(), x.size());
    CHECK(bit_equal(o1, o2));
}

TEST_CASE("pairwise_inner matches a naive double loop") {
    ModeGuard guard;
    Rng rng(13);
    const int batch = 6, fields = 5, d = 3;
    auto x = random_vec(static_cast<size_t>(batch) * fields * d, rng);
    std::vector<double> v(static_cast<size_t>(batch) * fields * (fields - 1) / 2);
    k::set_mode(k::Mode::Parallel);
    k::pairwise_inner(x.data(), v.data(), batch, fields, d);

    for (int b = 0; b < batch; ++b) {
        int p = 0;
        for (int i = 0; i < fields; ++i) {
            for (int j = i + 1; j < fields; ++j, ++p) {
                double want = 0.0;
                for (int t = 0; t < d; ++t)
                    want += x[(static_cast<size_t>(b) * fields + i) * d + t] *
                            x[(static_cast<size_t>(b) * fields + j) * d + t];
                CHECK(v[static_cast<size_t>(b) * (fields * (fields - 1) / 2) + p] ==
                      doctest::Approx(want).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("reduce_sum is chunk-deterministic across sizes") {
    ModeGuard guard;
    Rng rng(17);
    for (size_t n : {1ul, 5ul, 4096ul, 4097ul, 20000ul}) {
        auto x = random_vec(n, rng);
        k::set_mode(k::Mode::Serial);
        const double a = k::reduce_sum(x.data(), n);
        k::set_mode(k::Mode::Parallel);
        const double b = k::reduce_sum(x.data(), n);
        CHECK(a == b);
    }
}

TEST_CASE("gather then scatter round-trips gradients") {
    const int m = 10, cols = 4, nidx = 7;
    std::vector<double> table(static_cast<size_t>(m) * cols);
    Rng rng(3);
    for (auto& v : table) v = rng.uniform(-1.0, 1.0);
    std::vector<uint32_t> idx = {0, 3, 3, 9, 1, 0, 5};
    std::vector<double> out(static_cast<size_t>(nidx) * cols);
    k::gather_rows(table.data(), idx.data(), out.data(), nidx, cols);
    for (int r = 0; r < nidx; ++r)
        for (int c = 0; c < cols; ++c)
            CHECK(out[static_cast<size_t>(r) * cols + c] ==
                  table[static_cast<size_t>(idx[r]) * cols + c]);

    std::vector<double> dtable(table.size(), 0.0);
    std::vector<double> ones(out.size(), 1.0);
    k::scatter_add_rows(ones.data(), idx.data(), dtable.data(), nidx, cols);
    // row 0 and 3 appear twice
    CHECK(dtable[0] == 2.0);
    CHECK(dtable[static_cast<size_t>(3) * cols] == 2.0);
    CHECK(dtable[static_cast<size_t>(9) * cols] == 1.0);
    CHECK(dtable[static_cast<size_t>(2) * cols] == 0.0);
}
