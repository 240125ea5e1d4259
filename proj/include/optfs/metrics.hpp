#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace optfs {

struct EvalReport {
    double auc = 0.0;
    double logloss = 0.0;
    double ratio = 1.0;
    size_t n_samples = 0;
    std::string manifest_id;  // producing run, when known

    std::string to_json() const;
};

// Probability a random positive outranks a random negative, ties 0.5.
// Rank-sum with midranks, O(N log N). Throws DataError on single-class input.
double auc(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Mean negative log-likelihood, natural log. Scores clamped to
// [1e-12, 1-1e-12] before taking logs.
double logloss(const std::vector<double>& scores, const std::vector<uint8_t>& labels);

// Plug-in mutual information between a discrete field and the binary label:
// MI = -sum_y P(y) log P(y) + sum_{x,y} P(x,y) log P(y|x), natural log,
// 0*log 0 defined as 0. `field_values` are the per-row values of one field.
double mutual_information(const std::vector<uint32_t>& field_values,
                          const std::vector<uint8_t>& labels);

double kept_ratio(const std::vector<uint8_t>& bits);

}  // namespace optfs
