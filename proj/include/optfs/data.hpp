#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "optfs/common.hpp"

namespace optfs {

enum class FieldType { Categorical, Numeric };

enum class NumericLogMode { SquaredLog2, PlainLog2 };

struct DatasetSchema {
    struct Field {
        std::string name;
        FieldType type = FieldType::Categorical;
    };
    std::vector<Field> fields;
    int min_count = 10;
    NumericLogMode numeric_log = NumericLogMode::SquaredLog2;

    int n() const { return static_cast<int>(fields.size()); }

    std::string to_json() const;
    static DatasetSchema from_json(const std::string& text);
    static DatasetSchema load(const std::string& path);
    void save(const std::string& path) const;
};

// One raw input row: binary label plus one token per field. Numeric fields are
// already discretized to tokens by the parser.
struct RawRow {
    uint8_t label = 0;
    std::vector<std::string> tokens;
};

// x > 2 maps to floor((log2 x)^2); anything else maps to the token "1".
// PlainLog2 mode uses floor(log2 x) instead.
std::string discretize_numeric(double x, NumericLogMode mode = NumericLogMode::SquaredLog2);

struct Sample {
    uint8_t label = 0;
    std::vector<uint32_t> feature_indices;  // one per field
};

class FeatureVocabulary {
public:
    // rows: training rows only; frequencies below min_count collapse per-field
    // into a reserved OOV index.
    static FeatureVocabulary build(const std::vector<RawRow>& rows, const DatasetSchema& schema);

    uint32_t m() const { return static_cast<uint32_t>(token_of_.size()); }
    int n() const { return static_cast<int>(field_names_.size()); }

    uint32_t index_of(int field, const std::string& token) const;
    uint32_t oov_index(int field) const { return oov_index_[field]; }
    int field_of(uint32_t index) const { return field_of_[index]; }
    const std::string& token_of(uint32_t index) const { return token_of_[index]; }
    bool is_oov(uint32_t index) const { return is_oov_[index]; }
    uint32_t count_of(uint32_t index) const { return counts_[index]; }
    const std::vector<std::string>& field_names() const { return field_names_; }
    int min_count() const { return min_count_; }

    Sample encode(const RawRow& row) const;
    std::vector<std::string> decode(const Sample& s) const;

    // content hash over the TSV body; identifies the vocabulary in every
    // downstream artifact (encoded data, masks, checkpoints)
    uint64_t content_hash() const { return hash_; }

    void save(const std::string& path) const;
    static FeatureVocabulary load(const std::string& path);

private:
    std::vector<std::string> field_names_;
    std::vector<std::unordered_map<std::string, uint32_t>> value_to_index_;
    std::vector<uint32_t> field_of_;
    std::vector<std::string> token_of_;
    std::vector<uint32_t> counts_;
    std::vector<uint8_t> is_oov_;
    std::vector<uint32_t> oov_index_;
    int min_count_ = 0;
    uint64_t hash_ = 0;

    std::string tsv_body() const;
    void finalize_hash();
};

struct EncodedDataset {
    int n = 0;  // fields per sample
    uint64_t vocab_hash = 0;
    std::vector<uint8_t> labels;
    std::vector<uint32_t> indices;  // row-major, size() == labels.size() * n

    size_t size() const { return labels.size(); }
    const uint32_t* row(size_t r) const { return indices.data() + r * n; }

    void save(const std::string& path) const;
    static EncodedDataset load(const std::string& path);
};

EncodedDataset encode_rows(const std::vector<RawRow>& rows, const FeatureVocabulary& vocab);

// TSV: header-less, label in column 0, then one column per schema field, in
// declared order. Numeric fields are discretized; empty cells become the
// "<MISSING>" token. Malformed rows raise DataError naming the row (1-based).
std::vector<RawRow> parse_tsv(const std::string& path, const DatasetSchema& schema);
RawRow parse_tsv_line(const std::string& line, const DatasetSchema& schema, size_t row_number);

// Deterministic 8:1:1 assignment: 0 = train, 1 = valid, 2 = test.
int split_assign(uint64_t seed, uint64_t row_index);

struct SyntheticSpec {
    int n_fields = 4;
    int features_per_field = 50;
    int informative_per_field = 5;
    double main_effect = 2.0;
    double pair_effect = 1.0;
    double bias = 0.0;
    int rows_train = 50000;
    int rows_valid = 6250;
    int rows_test = 6250;

    std::string to_json() const;
    static SyntheticSpec from_json(const std::string& text);
    static SyntheticSpec load(const std::string& path);
};

struct SyntheticData {
    DatasetSchema schema;
    std::vector<RawRow> train;
    std::vector<RawRow> valid;
    std::vector<RawRow> test;
    // ground truth: the planted informative (field, token) pairs and their
    // main-effect coefficients
    std::vector<std::pair<int, std::string>> informative;
    std::vector<double> main_effects;

    std::string truth_json() const;
};

// Labels are Bernoulli(sigmoid(bias + planted main effects + planted pairwise
// effects)); features outside the informative set have zero effect.
SyntheticData generate_synthetic(const SyntheticSpec& spec, uint64_t seed);

void write_tsv(const std::vector<RawRow>& rows, const std::string& path);

}  // namespace optfs
