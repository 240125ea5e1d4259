// Times the OpenMP kernels against the serial reference and checks that both
// produce bit-identical results on the benchmark inputs.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <vector>

#include "optfs/common.hpp"
#include "optfs/kernels.hpp"

using namespace optfs;
namespace k = optfs::kernels;

namespace {

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm-up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

struct Case {
    const char* name;
    std::function<void()> run;
    const double* out;
    size_t out_len;
};

}  // namespace

int main(int argc, char** argv) {
    int reps = 20;
    if (argc > 1) reps = std::atoi(argv[1]);
    Rng rng(42);

    const int rows = 2048, inner = 256, cols = 128;
    auto a = random_vec(static_cast<size_t>(rows) * inner, rng);
    auto b = random_vec(static_cast<size_t>(inner) * cols, rng);
    std::vector<double> c(static_cast<size_t>(rows) * cols);
    auto x = random_vec(static_cast<size_t>(rows) * cols, rng);
    auto s = random_vec(rows, rng);
    std::vector<double> y(x.size());
    const int fields = 24, d = 16, batch = 1024;
    auto e = random_vec(static_cast<size_t>(batch) * fields * d, rng);
    std::vector<double> v(static_cast<size_t>(batch) * fields * (fields - 1) / 2);
    double sum_out = 0.0;

    std::vector<Case> cases = {
        {"matmul 2048x256x128", [&] { k::matmul(a.data(), b.data(), c.data(), rows, inner, cols); },
         c.data(), c.size()},
        {"sigmoid 262144", [&] { k::sigmoid(x.data(), y.data(), x.size()); }, y.data(), y.size()},
        {"scale_rows 2048x128", [&] { k::scale_rows(x.data(), s.data(), y.data(), rows, cols); },
         y.data(), y.size()},
        {"pairwise_inner 1024x24x16",
         [&] { k::pairwise_inner(e.data(), v.data(), batch, fields, d); }, v.data(), v.size()},
        {"reduce_sum 262144", [&] { sum_out = k::reduce_sum(x.data(), x.size()); }, &sum_out, 1},
    };

    std::printf("OpenMP: %s (max threads %d), reps=%d\n",
                k::openmp_available() ? "available" : "not built in", k::max_threads(), reps);
    std::printf("%-28s %12s %12s %9s %6s\n", "kernel", "serial ms", "parallel ms", "speedup",
                "equal");

    for (auto& cs : cases) {
        k::set_mode(k::Mode::Serial);
        const double t_serial = time_ms(cs.run, reps);
        std::vector<double> ref(cs.out, cs.out + cs.out_len);

        k::set_mode(k::Mode::Parallel);
        const double t_par = time_ms(cs.run, reps);
        const bool equal = std::memcmp(ref.data(), cs.out, cs.out_len * sizeof(double)) == 0;

        std::printf("%-28s %12.3f %12.3f %8.2fx %6s\n", cs.name, t_serial, t_par,
                    t_serial / t_par, equal ? "yes" : "NO");
        if (!equal) return 1;
    }
    return 0;
}
