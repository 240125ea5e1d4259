#include "optfs/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include "optfs/common.hpp"

namespace optfs {

std::string EvalReport::to_json() const {
    char buf[320];
    if (manifest_id.empty()) {
        std::snprintf(buf, sizeof(buf),
                      "{\"auc\": %.17g, \"logloss\": %.17g, \"ratio\": %.17g, "
                      "\"n_samples\": %zu, \"log_base\": \"e\"}",
                      auc, logloss, ratio, n_samples);
    } else {
        std::snprintf(buf, sizeof(buf),
                      "{\"auc\": %.17g, \"logloss\": %.17g, \"ratio\": %.17g, "
                      "\"n_samples\": %zu, \"log_base\": \"e\", \"manifest_id\": \"%s\"}",
                      auc, logloss, ratio, n_samples, manifest_id.c_str());
    }
    return buf;
}

double auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw ContractError("auc: scores and labels differ in length");
    const size_t n = scores.size();
    size_t pos = 0;
    for (uint8_t y : labels) pos += y;
    const size_t neg = n - pos;
    if (pos == 0 || neg == 0)
        throw DataError("auc undefined: input contains a single class");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // midranks over tie groups, rank-sum over positives
    double rank_sum_pos = 0.0;
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (size_t k = i; k <= j; ++k)
            if (labels[order[k]]) rank_sum_pos += midrank;
        i = j + 1;
    }
    const double p = static_cast<double>(pos);
    return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double logloss(const std::vector<double>& scores, const std::vector<uint8_t>& labels) {
    if (scores.size() != labels.size())
        throw ContractError("logloss: scores and labels differ in length");
    if (scores.empty()) throw DataError("logloss: empty input");
    double acc = 0.0;
    for (size_t i = 0; i < scores.size(); ++i) {
        double p = scores[i];
        if (p < 1e-12) p = 1e-12;
        if (p > 1.0 - 1e-12) p = 1.0 - 1e-12;
        acc += labels[i] ? std::log(p) : std::log(1.0 - p);
    }
    return -acc / static_cast<double>(scores.size());
}

double mutual_information(const std::vector<uint32_t>& field_values,
                          const std::vector<uint8_t>& labels) {
    if (field_values.size() != labels.size())
        throw ContractError("mutual_information: values and labels differ in length");
    const size_t n = field_values.size();
    if (n == 0) throw DataError("mutual_information: empty dataset");

    size_t n_pos = 0;
    for (uint8_t y : labels) n_pos += y;
    std::unordered_map<uint32_t, std::pair<size_t, size_t>> counts;  // value -> (neg, pos)
    for (size_t i = 0; i < n; ++i) {
        auto& c = counts[field_values[i]];
        if (labels[i])
            ++c.second;
        else
            ++c.first;
    }

    const double dn = static_cast<double>(n);
    double marginal = 0.0;  // -sum_y P(y) log P(y)
    for (double cy : {static_cast<double>(n - n_pos), static_cast<double>(n_pos)}) {
        if (cy > 0.0) {
            const double py = cy / dn;
            marginal -= py * std::log(py);
        }
    }
    double conditional = 0.0;  // sum_{x,y} P(x,y) log P(y|x)
    for (const auto& [value, c] : counts) {
        (void)value;
        const double cx = static_cast<double>(c.first + c.second);
        for (double cxy : {static_cast<double>(c.first), static_cast<double>(c.second)}) {
            if (cxy > 0.0) {
                const double pxy = cxy / dn;
                conditional += pxy * std::log(cxy / cx);
            }
        }
    }
    return marginal + conditional;
}

double kept_ratio(const std::vector<uint8_t>& bits) {
    if (bits.empty()) return 0.0;
    size_t kept = 0;
    for (uint8_t b : bits) kept += b;
    return static_cast<double>(kept) / static_cast<double>(bits.size());
}

}  // namespace optfs
