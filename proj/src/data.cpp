#include "optfs/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "optfs/fsio.hpp"

namespace optfs {

using nlohmann::json;

namespace {

constexpr const char* kOovToken = "<OOV>";
constexpr const char* kMissingToken = "<MISSING>";

}  // namespace

std::string hash_to_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

uint64_t hex_to_hash(const std::string& s) {
    return std::strtoull(s.c_str(), nullptr, 16);
}

std::string DatasetSchema::to_json() const {
    json j;
    j["min_count"] = min_count;
    j["numeric_log"] = numeric_log == NumericLogMode::SquaredLog2 ? "squared" : "plain";
    j["fields"] = json::array();
    for (const auto& f : fields) {
        j["fields"].push_back({{"name", f.name},
                               {"type", f.type == FieldType::Numeric ? "numeric" : "categorical"}});
    }
    return j.dump(2);
}

DatasetSchema DatasetSchema::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("schema: invalid JSON: ") + e.what());
    }
    DatasetSchema s;
    if (!j.contains("fields") || !j["fields"].is_array() || j["fields"].empty())
        throw ConfigError("schema: missing non-empty 'fields' array");
    for (const auto& f : j["fields"]) {
        Field fld;
        fld.name = f.at("name").get<std::string>();
        const std::string t = f.value("type", "categorical");
        if (t == "categorical")
            fld.type = FieldType::Categorical;
        else if (t == "numeric")
            fld.type = FieldType::Numeric;
        else
            throw ConfigError("schema: unknown field type '" + t + "'");
        s.fields.push_back(std::move(fld));
    }
    s.min_count = j.value("min_count", 10);
    if (s.min_count < 1) throw ConfigError("schema: min_count must be >= 1");
    const std::string lm = j.value("numeric_log", "squared");
    if (lm == "squared")
        s.numeric_log = NumericLogMode::SquaredLog2;
    else if (lm == "plain")
        s.numeric_log = NumericLogMode::PlainLog2;
    else
        throw ConfigError("schema: numeric_log must be 'squared' or 'plain'");
    return s;
}

DatasetSchema DatasetSchema::load(const std::string& path) {
    return from_json(read_file(path));
}

void DatasetSchema::save(const std::string& path) const {
    write_file(path, to_json() + "\n");
}

std::string discretize_numeric(double x, NumericLogMode mode) {
    if (!std::isfinite(x)) throw DataError("discretize_numeric: non-finite value");
    if (x > 2.0) {
        const double l = std::log2(x);
        const double v = mode == NumericLogMode::SquaredLog2 ? l * l : l;
        return std::to_string(static_cast<long long>(std::floor(v)));
    }
    return "1";
}

FeatureVocabulary FeatureVocabulary::build(const std::vector<RawRow>& rows,
                                           const DatasetSchema& schema) {
    if (rows.empty()) throw DataError("build_vocabulary: empty input");
    const int n = schema.n();
    // ordered map keeps token assignment order-insensitive: indices depend
    // only on the (field, token) frequency table, not on row order
    std::vector<std::map<std::string, uint32_t>> freq(n);
    for (size_t r = 0; r < rows.size(); ++r) {
        if (static_cast<int>(rows[r].tokens.size()) != n)
            throw DataError("build_vocabulary: row " + std::to_string(r + 1) + " has " +
                            std::to_string(rows[r].tokens.size()) + " fields, schema declares " +
                            std::to_string(n));
        for (int f = 0; f < n; ++f) ++freq[f][rows[r].tokens[f]];
    }

    FeatureVocabulary v;
    v.min_count_ = schema.min_count;
    v.value_to_index_.resize(n);
    v.oov_index_.resize(n);
    for (const auto& f : schema.fields) v.field_names_.push_back(f.name);

    for (int f = 0; f < n; ++f) {
        const uint32_t oov = static_cast<uint32_t>(v.token_of_.size());
        v.oov_index_[f] = oov;
        v.token_of_.push_back(kOovToken);
        v.field_of_.push_back(static_cast<uint32_t>(f));
        v.is_oov_.push_back(1);
        v.counts_.push_back(0);
        for (const auto& [token, count] : freq[f]) {
            if (count >= static_cast<uint32_t>(schema.min_count)) {
                const uint32_t idx = static_cast<uint32_t>(v.token_of_.size());
                v.value_to_index_[f].emplace(token, idx);
                v.token_of_.push_back(token);
                v.field_of_.push_back(static_cast<uint32_t>(f));
                v.is_oov_.push_back(0);
                v.counts_.push_back(count);
            } else {
                v.counts_[oov] += count;
            }
        }
    }
    v.finalize_hash();
    return v;
}

uint32_t FeatureVocabulary::index_of(int field, const std::string& token) const {
    const auto& m = value_to_index_[field];
    auto it = m.find(token);
    return it == m.end() ? oov_index_[field] : it->second;
}

Sample FeatureVocabulary::encode(const RawRow& row) const {
    if (static_cast<int>(row.tokens.size()) != n())
        throw DataError("encode: row has " + std::to_string(row.tokens.size()) +
                        " fields, vocabulary has " + std::to_string(n()));
    if (row.label > 1) throw DataError("encode: label must be 0 or 1");
    Sample s;
    s.label = row.label;
    s.feature_indices.reserve(n());
    for (int f = 0; f < n(); ++f) s.feature_indices.push_back(index_of(f, row.tokens[f]));
    return s;
}

std::vector<std::string> FeatureVocabulary::decode(const Sample& s) const {
    std::vector<std::string> out;
    out.reserve(s.feature_indices.size());
    for (uint32_t idx : s.feature_indices) {
        if (idx >= m()) throw DataError("decode: index out of range");
        out.push_back(token_of_[idx]);
    }
    return out;
}

std::string FeatureVocabulary::tsv_body() const {
    std::ostringstream ss;
    for (uint32_t i = 0; i < m(); ++i) {
        ss << field_of_[i] << '\t' << token_of_[i] << '\t' << i << '\t' << counts_[i] << '\n';
    }
    return ss.str();
}

void FeatureVocabulary::finalize_hash() {
    hash_ = fnv1a64(tsv_body());
}

void FeatureVocabulary::save(const std::string& path) const {
    json header;
    header["m"] = m();
    header["n"] = n();
    header["hash"] = hash_to_hex(hash_);
    header["min_count"] = min_count_;
    header["fields"] = field_names_;
    write_file(path, header.dump() + "\n" + tsv_body());
}

FeatureVocabulary FeatureVocabulary::load(const std::string& path) {
    const std::string content = read_file(path);
    const size_t nl = content.find('\n');
    if (nl == std::string::npos) throw DataError("vocabulary file: missing header line: " + path);
    json header;
    try {
        header = json::parse(content.substr(0, nl));
    } catch (const json::exception& e) {
        throw DataError(std::string("vocabulary file: bad header: ") + e.what());
    }

    FeatureVocabulary v;
    v.min_count_ = header.at("min_count").get<int>();
    v.field_names_ = header.at("fields").get<std::vector<std::string>>();
    const int n = static_cast<int>(v.field_names_.size());
    v.value_to_index_.resize(n);
    v.oov_index_.assign(n, 0);

    std::istringstream body(content.substr(nl + 1));
    std::string line;
    size_t lineno = 1;
    while (std::getline(body, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string field_s, token, index_s, count_s;
        if (!std::getline(ls, field_s, '\t') || !std::getline(ls, token, '\t') ||
            !std::getline(ls, index_s, '\t') || !std::getline(ls, count_s, '\t'))
            throw DataError("vocabulary file: malformed line " + std::to_string(lineno));
        uint32_t field, index, count;
        try {
            field = static_cast<uint32_t>(std::stoul(field_s));
            index = static_cast<uint32_t>(std::stoul(index_s));
            count = static_cast<uint32_t>(std::stoul(count_s));
        } catch (const std::exception&) {
            throw DataError("vocabulary file: malformed line " + std::to_string(lineno));
        }
        if (index != v.token_of_.size())
            throw DataError("vocabulary file: indices not dense at line " + std::to_string(lineno));
        if (field >= static_cast<uint32_t>(n))
            throw DataError("vocabulary file: field id out of range at line " +
                            std::to_string(lineno));
        const bool oov = token == kOovToken;
        if (oov) v.oov_index_[field] = index;
        v.token_of_.push_back(token);
        v.field_of_.push_back(field);
        v.is_oov_.push_back(oov ? 1 : 0);
        v.counts_.push_back(count);
        if (!oov) v.value_to_index_[field].emplace(token, index);
    }
    if (v.m() != header.at("m").get<uint32_t>())
        throw DataError("vocabulary file: header m does not match body");
    v.finalize_hash();
    if (hash_to_hex(v.hash_) != header.at("hash").get<std::string>())
        throw DataError("vocabulary file: content hash mismatch");
    return v;
}

EncodedDataset encode_rows(const std::vector<RawRow>& rows, const FeatureVocabulary& vocab) {
    EncodedDataset d;
    d.n = vocab.n();
    d.vocab_hash = vocab.content_hash();
    d.labels.reserve(rows.size());
    d.indices.reserve(rows.size() * vocab.n());
    for (const auto& r : rows) {
        Sample s = vocab.encode(r);
        d.labels.push_back(s.label);
        d.indices.insert(d.indices.end(), s.feature_indices.begin(), s.feature_indices.end());
    }
    return d;
}

namespace {
constexpr char kDatasetMagic[4] = {'O', 'F', 'S', 'D'};
constexpr uint32_t kDatasetVersion = 1;
}  // namespace

void EncodedDataset::save(const std::string& path) const {
    std::string buf;
    buf.append(kDatasetMagic, 4);
    put_le<uint32_t>(buf, kDatasetVersion);
    put_le<uint64_t>(buf, vocab_hash);
    put_le<uint32_t>(buf, static_cast<uint32_t>(n));
    put_le<uint64_t>(buf, labels.size());
    for (size_t r = 0; r < labels.size(); ++r) {
        buf.push_back(static_cast<char>(labels[r]));
        for (int f = 0; f < n; ++f) put_le<uint32_t>(buf, indices[r * n + f]);
    }
    write_file(path, buf);
}

EncodedDataset EncodedDataset::load(const std::string& path) {
    const std::string buf = read_file(path);
    if (buf.size() < 4 || std::memcmp(buf.data(), kDatasetMagic, 4) != 0)
        throw DataError("not an encoded dataset file: " + path);
    size_t off = 4;
    const uint32_t version = get_le<uint32_t>(buf, off);
    if (version != kDatasetVersion)
        throw DataError("encoded dataset version " + std::to_string(version) + " unsupported");
    EncodedDataset d;
    d.vocab_hash = get_le<uint64_t>(buf, off);
    d.n = static_cast<int>(get_le<uint32_t>(buf, off));
    const uint64_t rows = get_le<uint64_t>(buf, off);
    d.labels.reserve(rows);
    d.indices.reserve(rows * d.n);
    for (uint64_t r = 0; r < rows; ++r) {
        d.labels.push_back(get_le<uint8_t>(buf, off));
        for (int f = 0; f < d.n; ++f) d.indices.push_back(get_le<uint32_t>(buf, off));
    }
    return d;
}

RawRow parse_tsv_line(const std::string& line, const DatasetSchema& schema, size_t row_number) {
    RawRow row;
    std::vector<std::string> cells;
    size_t start = 0;
    while (true) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    if (static_cast<int>(cells.size()) != schema.n() + 1)
        throw DataError("row " + std::to_string(row_number) + ": expected " +
                        std::to_string(schema.n() + 1) + " columns, got " +
                        std::to_string(cells.size()));
    if (cells[0] == "0")
        row.label = 0;
    else if (cells[0] == "1")
        row.label = 1;
    else
        throw DataError("row " + std::to_string(row_number) + ": label '" + cells[0] +
                        "' is not 0 or 1");
    row.tokens.reserve(schema.n());
    for (int f = 0; f < schema.n(); ++f) {
        const std::string& cell = cells[f + 1];
        if (cell.empty()) {
            row.tokens.push_back(kMissingToken);
            continue;
        }
        if (schema.fields[f].type == FieldType::Numeric) {
            char* end = nullptr;
            const double x = std::strtod(cell.c_str(), &end);
            if (end == cell.c_str() || *end != '\0' || !std::isfinite(x))
                throw DataError("row " + std::to_string(row_number) + ", column " +
                                std::to_string(f + 2) + " (" + schema.fields[f].name +
                                "): cannot parse numeric value '" + cell + "'");
            row.tokens.push_back(discretize_numeric(x, schema.numeric_log));
        } else {
            row.tokens.push_back(cell);
        }
    }
    return row;
}

std::vector<RawRow> parse_tsv(const std::string& path, const DatasetSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open TSV file: " + path);
    std::vector<RawRow> rows;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(parse_tsv_line(line, schema, lineno));
    }
    if (rows.empty()) throw DataError("TSV file is empty: " + path);
    return rows;
}

int split_assign(uint64_t seed, uint64_t row_index) {
    uint64_t h = fnv1a64(&row_index, sizeof(row_index), seed ^ 0xcbf29ce484222325ull);
    const uint64_t bucket = h % 10;
    if (bucket < 8) return 0;
    return bucket == 8 ? 1 : 2;
}

std::string SyntheticSpec::to_json() const {
    json j;
    j["n_fields"] = n_fields;
    j["features_per_field"] = features_per_field;
    j["informative_per_field"] = informative_per_field;
    j["main_effect"] = main_effect;
    j["pair_effect"] = pair_effect;
    j["bias"] = bias;
    j["rows_train"] = rows_train;
    j["rows_valid"] = rows_valid;
    j["rows_test"] = rows_test;
    return j.dump(2);
}

SyntheticSpec SyntheticSpec::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("synthetic spec: invalid JSON: ") + e.what());
    }
    SyntheticSpec s;
    s.n_fields = j.value("n_fields", s.n_fields);
    s.features_per_field = j.value("features_per_field", s.features_per_field);
    s.informative_per_field = j.value("informative_per_field", s.informative_per_field);
    s.main_effect = j.value("main_effect", s.main_effect);
    s.pair_effect = j.value("pair_effect", s.pair_effect);
    s.bias = j.value("bias", s.bias);
    s.rows_train = j.value("rows_train", s.rows_train);
    s.rows_valid = j.value("rows_valid", s.rows_valid);
    s.rows_test = j.value("rows_test", s.rows_test);
    if (s.n_fields < 1 || s.features_per_field < 1)
        throw ConfigError("synthetic spec: need at least one field and one feature");
    if (s.informative_per_field > s.features_per_field)
        throw ConfigError("synthetic spec: informative_per_field exceeds features_per_field");
    if (s.rows_train < 1) throw ConfigError("synthetic spec: rows_train must be positive");
    return s;
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
    return from_json(read_file(path));
}

namespace {

std::string synth_token(int field, int value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "f%dv%03d", field, value);
    return buf;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec, uint64_t seed) {
    if (spec.informative_per_field > spec.features_per_field)
        throw ConfigError("generate_synthetic: informative_per_field exceeds features_per_field");
    Rng rng(seed);

    SyntheticData out;
    out.schema.min_count = 1;
    for (int f = 0; f < spec.n_fields; ++f)
        out.schema.fields.push_back({"field" + std::to_string(f), FieldType::Categorical});

    const int ipf = spec.informative_per_field;
    const int total_informative = spec.n_fields * ipf;

    // planted coefficients, drawn before any row so row counts do not shift them
    std::vector<double> beta(total_informative, 0.0);
    for (int i = 0; i < total_informative; ++i)
        beta[i] = (rng.bernoulli(0.5) ? 1.0 : -1.0) * spec.main_effect;
    std::vector<double> beta2(static_cast<size_t>(total_informative) * total_informative, 0.0);
    for (int a = 0; a < total_informative; ++a) {
        for (int b = a + 1; b < total_informative; ++b) {
            if (a / ipf == b / ipf) continue;  // same field never co-occurs
            beta2[static_cast<size_t>(a) * total_informative + b] =
                (rng.bernoulli(0.5) ? 1.0 : -1.0) * spec.pair_effect;
        }
    }

    for (int f = 0; f < spec.n_fields; ++f) {
        for (int v = 0; v < ipf; ++v) {
            out.informative.emplace_back(f, synth_token(f, v));
            out.main_effects.push_back(beta[f * ipf + v]);
        }
    }

    auto gen_rows = [&](int count) {
        std::vector<RawRow> rows;
        rows.reserve(count);
        std::vector<int> inf_ids;
        for (int r = 0; r < count; ++r) {
            RawRow row;
            row.tokens.reserve(spec.n_fields);
            inf_ids.clear();
            double logit = spec.bias;
            for (int f = 0; f < spec.n_fields; ++f) {
                const int v = static_cast<int>(rng.uniform_index(spec.features_per_field));
                row.tokens.push_back(synth_token(f, v));
                if (v < ipf) {
                    const int id = f * ipf + v;
                    logit += beta[id];
                    for (int prev : inf_ids)
                        logit += beta2[static_cast<size_t>(prev) * total_informative + id];
                    inf_ids.push_back(id);
                }
            }
            row.label = rng.bernoulli(sigmoid_scalar(logit)) ? 1 : 0;
            rows.push_back(std::move(row));
        }
        return rows;
    };

    out.train = gen_rows(spec.rows_train);
    out.valid = gen_rows(spec.rows_valid);
    out.test = gen_rows(spec.rows_test);
    return out;
}

std::string SyntheticData::truth_json() const {
    json j;
    j["informative"] = json::array();
    for (size_t i = 0; i < informative.size(); ++i) {
        j["informative"].push_back({{"field", informative[i].first},
                                    {"token", informative[i].second},
                                    {"main_effect", main_effects[i]}});
    }
    return j.dump(2);
}

void write_tsv(const std::vector<RawRow>& rows, const std::string& path) {
    std::ostringstream ss;
    for (const auto& r : rows) {
        ss << static_cast<int>(r.label);
        for (const auto& t : r.tokens) ss << '\t' << t;
        ss << '\n';
    }
    write_file(path, ss.str());
}

}  // namespace optfs
