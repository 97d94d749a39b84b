#include "cmac/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cmac/errors.hpp"

namespace cmac {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

void json_escape(const std::string& s, std::string& out) {
    out += '"';
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof buf, "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

/// Compact serialization with sorted keys and fixed float formatting;
/// the one JSON shape all goldens and round-trip checks rely on.
void dump_canonical(const json& j, std::string& out) {
    switch (j.type()) {
        case json::value_t::object: {
            out += '{';
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) out += ',';
                first = false;
                json_escape(key, out);
                out += ':';
                dump_canonical(value, out);
            }
            out += '}';
            break;
        }
        case json::value_t::array: {
            out += '[';
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i > 0) out += ',';
                dump_canonical(j[i], out);
            }
            out += ']';
            break;
        }
        case json::value_t::string:
            json_escape(j.get_ref<const std::string&>(), out);
            break;
        case json::value_t::boolean:
            out += j.get<bool>() ? "true" : "false";
            break;
        case json::value_t::number_integer:
            out += std::to_string(j.get<std::int64_t>());
            break;
        case json::value_t::number_unsigned:
            out += std::to_string(j.get<std::uint64_t>());
            break;
        case json::value_t::number_float:
            out += format_double(j.get<double>());
            break;
        default:
            out += "null";
    }
}

std::string canonical(const json& j) {
    std::string out;
    dump_canonical(j, out);
    out += '\n';
    return out;
}

json parse_json(const std::string& text, const std::string& what) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) {
        throw SchemaError(what + ": invalid JSON");
    }
    return j;
}

void check_schema(const json& j, const std::string& what, const std::string& expected) {
    if (!j.is_object() || !j.contains("schema") || j["schema"] != expected) {
        throw SchemaError(what + ": expected schema \"" + expected + "\"");
    }
    if (!j.contains("version") || !j["version"].is_number_integer() ||
        j["version"].get<int>() != kSchemaVersion) {
        throw SchemaError(what + ": unsupported schema version");
    }
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw SchemaError("unknown key \"" + path + (path.empty() ? "" : ".") + key + "\"");
        }
    }
}

double require_double(const json& obj, const std::string& path, const char* key) {
    if (!obj.contains(key) || !obj[key].is_number()) {
        throw SchemaError("missing or non-numeric field \"" + path + "." + key + "\"");
    }
    return obj[key].get<double>();
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

void check_attribute_value(const std::string& value, const std::string& where) {
    if (value.empty()) {
        throw SchemaError(where + ": empty attribute value");
    }
    if (value.find_first_of("\t\n|,") != std::string::npos) {
        throw SchemaError(where + ": attribute value \"" + value + "\" contains a delimiter");
    }
}

json dataset_header(const std::vector<std::string>& attribute_names, bool features, int d_in,
                    bool predicted) {
    json h;
    h["schema"] = "cmacmmd.dataset";
    h["version"] = kSchemaVersion;
    h["id"] = "id";
    h["attributes"] = attribute_names;
    h["label"] = "label";
    if (features) {
        json f = json::array();
        for (int d = 0; d < d_in; ++d) f.push_back("f" + std::to_string(d));
        h["features"] = f;
    } else {
        h["score"] = "score";
        if (predicted) h["predicted"] = "predicted";
    }
    return h;
}

json parse_dataset_header(const std::string& path, const std::string& line) {
    json h = parse_json(line, path + " header");
    check_schema(h, path, "cmacmmd.dataset");
    check_keys(h, "header",
               {"schema", "version", "id", "attributes", "label", "features", "score",
                "predicted"});
    if (!h.contains("attributes") || !h["attributes"].is_array() || h["attributes"].empty() ||
        h["attributes"].size() > 3) {
        throw SchemaError(path + ": header needs 1..3 attribute columns");
    }
    return h;
}

std::int64_t parse_int(const std::string& s, const std::string& where) {
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw SchemaError(where + ": expected integer, got \"" + s + "\"");
    }
    return v;
}

double parse_double_field(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(where + ": expected number, got \"" + s + "\"");
    }
}

json kernel_to_json(const KernelConfig& k) {
    json j;
    j["mode"] = k.bandwidth_mode == KernelConfig::Bandwidth::fixed ? "fixed" : "median_heuristic";
    j["bandwidth"] = k.bandwidth;
    j["estimator"] = k.estimator == KernelConfig::Estimator::unbiased ? "unbiased" : "biased";
    return j;
}

KernelConfig kernel_from_json(const json& j, const std::string& path) {
    check_keys(j, path, {"mode", "bandwidth", "estimator"});
    KernelConfig k;
    if (j.contains("mode")) {
        const std::string mode = j["mode"].get<std::string>();
        if (mode == "fixed") {
            k.bandwidth_mode = KernelConfig::Bandwidth::fixed;
        } else if (mode == "median_heuristic") {
            k.bandwidth_mode = KernelConfig::Bandwidth::median_heuristic;
        } else {
            throw SchemaError(path + ".mode: unknown kernel mode \"" + mode + "\"");
        }
    }
    if (j.contains("bandwidth")) {
        k.bandwidth = require_double(j, path, "bandwidth");
        if (k.bandwidth_mode == KernelConfig::Bandwidth::fixed && !(k.bandwidth > 0.0)) {
            throw SchemaError(path + ".bandwidth: must be positive");
        }
    }
    if (j.contains("estimator")) {
        const std::string est = j["estimator"].get<std::string>();
        if (est == "biased") {
            k.estimator = KernelConfig::Estimator::biased;
        } else if (est == "unbiased") {
            k.estimator = KernelConfig::Estimator::unbiased;
        } else {
            throw SchemaError(path + ".estimator: unknown estimator \"" + est + "\"");
        }
    }
    return k;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) {
        throw SchemaError(where + ": expected a 2-D array");
    }
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    const Eigen::Index cols = static_cast<Eigen::Index>(j[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        if (static_cast<Eigen::Index>(j[r].size()) != cols) {
            throw SchemaError(where + ": ragged rows");
        }
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

CohortSpec parse_cohort(const json& cohort) {
    CohortSpec spec;
    if (cohort.contains("preset")) {
        check_keys(cohort, "cohort", {"preset", "seed"});
        spec = cohort_preset(cohort.at("preset").get<std::string>());
        if (cohort.contains("seed")) spec.seed = cohort.at("seed").get<std::uint64_t>();
        return spec;
    }
    check_keys(cohort, "cohort", {"attribute_names", "subgroups", "d_in", "noise_sigma", "seed"});
    spec.attribute_names = cohort.at("attribute_names").get<std::vector<std::string>>();
    if (!cohort.contains("subgroups") || !cohort["subgroups"].is_array() ||
        cohort["subgroups"].empty()) {
        throw SchemaError("cohort.subgroups: need a nonempty array");
    }
    std::size_t gi = 0;
    for (const auto& g : cohort["subgroups"]) {
        const std::string gpath = "cohort.subgroups[" + std::to_string(gi) + "]";
        check_keys(g, gpath, {"key", "n", "prevalence", "separation"});
        SubgroupSpec sg;
        sg.key.values = g.at("key").get<std::vector<std::string>>();
        if (sg.key.values.size() != spec.attribute_names.size()) {
            throw SchemaError(gpath + ".key: wrong number of attribute values");
        }
        sg.n = g.at("n").get<int>();
        if (sg.n < 1) throw SchemaError(gpath + ".n: must be >= 1");
        sg.prevalence = require_double(g, gpath, "prevalence");
        if (sg.prevalence < 0.0 || sg.prevalence > 1.0) {
            throw SchemaError(gpath + ".prevalence: must be inside [0, 1], got " +
                              format_double(sg.prevalence));
        }
        sg.separation = require_double(g, gpath, "separation");
        if (!(sg.separation >= 0.0)) {
            throw SchemaError(gpath + ".separation: must be nonnegative");
        }
        spec.subgroups.push_back(std::move(sg));
        ++gi;
    }
    if (cohort.contains("d_in")) spec.d_in = cohort.at("d_in").get<int>();
    if (cohort.contains("noise_sigma")) {
        spec.noise_sigma = require_double(cohort, "cohort", "noise_sigma");
        if (!(spec.noise_sigma > 0.0)) {
            throw SchemaError("cohort.noise_sigma: must be positive");
        }
    }
    if (cohort.contains("seed")) spec.seed = cohort.at("seed").get<std::uint64_t>();
    return spec;
}

json ci_to_json(const BootstrapCI& ci) {
    json j;
    j["point"] = ci.point;
    j["lo"] = ci.lo;
    j["hi"] = ci.hi;
    return j;
}

BootstrapCI ci_from_json(const json& j) {
    BootstrapCI ci;
    ci.point = j["point"].get<double>();
    ci.lo = j["lo"].get<double>();
    ci.hi = j["hi"].get<double>();
    return ci;
}

json ci_map_to_json(const std::map<std::string, BootstrapCI>& cis) {
    json j = json::object();
    for (const auto& [name, ci] : cis) j[name] = ci_to_json(ci);
    return j;
}

SubgroupKey key_from_string(const std::string& joined) {
    SubgroupKey key;
    std::size_t start = 0;
    while (true) {
        const std::size_t bar = joined.find('|', start);
        if (bar == std::string::npos) {
            key.values.push_back(joined.substr(start));
            break;
        }
        key.values.push_back(joined.substr(start, bar - start));
        start = bar + 1;
    }
    return key;
}

} // namespace

std::string format_double(double value) {
    if (std::isnan(value)) return "null";
    if (std::isinf(value)) return "null";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

std::string slurp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw SchemaError("cannot open file: " + path);
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw SchemaError("cannot write file: " + path);
    }
    out << contents;
}

// --- dataset files ---------------------------------------------------------

DatasetKind sniff_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open file: " + path);
    std::string line;
    std::getline(in, line);
    const json h = parse_dataset_header(path, line);
    return h.contains("features") ? DatasetKind::features : DatasetKind::scored;
}

void write_feature_dataset(const std::string& path, const FeatureDataset& dataset) {
    if (dataset.records.empty()) throw SchemaError("write_feature_dataset: no records");
    const int d_in = static_cast<int>(dataset.records.front().features.size());
    std::string out;
    dump_canonical(dataset_header(dataset.attribute_names, true, d_in, false), out);
    out += '\n';
    std::set<std::int64_t> ids;
    for (const auto& rec : dataset.records) {
        if (!ids.insert(rec.id).second) {
            throw SchemaError("duplicate id " + std::to_string(rec.id));
        }
        if (rec.subgroup.values.size() != dataset.attribute_names.size()) {
            throw SchemaError("record " + std::to_string(rec.id) +
                              " has wrong attribute count");
        }
        out += std::to_string(rec.id);
        for (const auto& v : rec.subgroup.values) {
            check_attribute_value(v, "record " + std::to_string(rec.id));
            out += '\t';
            out += v;
        }
        out += '\t';
        out += std::to_string(rec.label);
        for (int d = 0; d < d_in; ++d) {
            out += '\t';
            out += format_double(rec.features(d));
        }
        out += '\n';
    }
    write_text_file(path, out);
}

FeatureDataset read_feature_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open file: " + path);
    std::string line;
    std::getline(in, line);
    const json h = parse_dataset_header(path, line);
    if (!h.contains("features")) {
        throw SchemaError(path + ": dataset has no feature columns");
    }
    FeatureDataset out;
    out.attribute_names = h["attributes"].get<std::vector<std::string>>();
    const std::size_t n_attrs = out.attribute_names.size();
    const std::size_t d_in = h["features"].size();
    const std::size_t expected = 2 + n_attrs + d_in;

    std::set<std::int64_t> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (fields.size() != expected) {
            throw SchemaError(where + ": expected " + std::to_string(expected) +
                              " columns, got " + std::to_string(fields.size()));
        }
        SampleRecord rec;
        rec.id = parse_int(fields[0], where + " (id)");
        if (!ids.insert(rec.id).second) {
            throw SchemaError(where + ": duplicate id " + std::to_string(rec.id));
        }
        for (std::size_t a = 0; a < n_attrs; ++a) {
            check_attribute_value(fields[1 + a], where + " (" + out.attribute_names[a] + ")");
            rec.subgroup.values.push_back(fields[1 + a]);
        }
        rec.label = static_cast<int>(parse_int(fields[1 + n_attrs], where + " (label)"));
        if (rec.label < 0) throw SchemaError(where + ": negative label");
        rec.features.resize(static_cast<Eigen::Index>(d_in));
        for (std::size_t d = 0; d < d_in; ++d) {
            rec.features(static_cast<Eigen::Index>(d)) =
                parse_double_field(fields[2 + n_attrs + d], where + " (f" + std::to_string(d) + ")");
        }
        out.records.push_back(std::move(rec));
    }
    if (out.records.empty()) throw SchemaError(path + ": no data rows");
    return out;
}

void write_scored_dataset(const std::string& path, const ScoredDataset& dataset) {
    if (dataset.rows.empty()) throw SchemaError("write_scored_dataset: no rows");
    const bool predicted = dataset.rows.front().predicted.has_value();
    std::string out;
    dump_canonical(dataset_header(dataset.attribute_names, false, 0, predicted), out);
    out += '\n';
    std::set<std::int64_t> ids;
    for (const auto& row : dataset.rows) {
        if (!ids.insert(row.id).second) {
            throw SchemaError("duplicate id " + std::to_string(row.id));
        }
        if (row.subgroup.values.size() != dataset.attribute_names.size()) {
            throw SchemaError("row " + std::to_string(row.id) + " has wrong attribute count");
        }
        if (row.predicted.has_value() != predicted) {
            throw SchemaError("row " + std::to_string(row.id) +
                              ": mixed presence of predicted column");
        }
        out += std::to_string(row.id);
        for (const auto& v : row.subgroup.values) {
            check_attribute_value(v, "row " + std::to_string(row.id));
            out += '\t';
            out += v;
        }
        out += '\t';
        out += std::to_string(row.true_label);
        out += '\t';
        out += format_double(row.score);
        if (predicted) {
            out += '\t';
            out += std::to_string(*row.predicted);
        }
        out += '\n';
    }
    write_text_file(path, out);
}

ScoredDataset read_scored_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open file: " + path);
    std::string line;
    std::getline(in, line);
    const json h = parse_dataset_header(path, line);
    if (!h.contains("score")) {
        throw SchemaError(path + ": dataset has no score column");
    }
    const bool predicted = h.contains("predicted");
    ScoredDataset out;
    out.attribute_names = h["attributes"].get<std::vector<std::string>>();
    const std::size_t n_attrs = out.attribute_names.size();
    const std::size_t expected = 3 + n_attrs + (predicted ? 1 : 0);

    std::set<std::int64_t> ids;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        const std::string where = path + ":" + std::to_string(line_no);
        if (fields.size() != expected) {
            throw SchemaError(where + ": expected " + std::to_string(expected) +
                              " columns, got " + std::to_string(fields.size()));
        }
        ScoredRow row;
        row.id = parse_int(fields[0], where + " (id)");
        if (!ids.insert(row.id).second) {
            throw SchemaError(where + ": duplicate id " + std::to_string(row.id));
        }
        for (std::size_t a = 0; a < n_attrs; ++a) {
            check_attribute_value(fields[1 + a], where + " (" + out.attribute_names[a] + ")");
            row.subgroup.values.push_back(fields[1 + a]);
        }
        row.true_label = static_cast<int>(parse_int(fields[1 + n_attrs], where + " (label)"));
        row.score = parse_double_field(fields[2 + n_attrs], where + " (score)");
        if (row.score < 0.0 || row.score > 1.0) {
            throw SchemaError(where + ": score outside [0, 1]");
        }
        if (predicted) {
            const std::int64_t p = parse_int(fields[3 + n_attrs], where + " (predicted)");
            if (p != 0 && p != 1) throw SchemaError(where + ": predicted must be 0 or 1");
            row.predicted = static_cast<int>(p);
        }
        out.rows.push_back(std::move(row));
    }
    if (out.rows.empty()) throw SchemaError(path + ": no data rows");
    return out;
}

// --- checkpoints ------------------------------------------------------------

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    json j;
    j["schema"] = "cmacmmd.checkpoint";
    j["version"] = kSchemaVersion;
    json train;
    train["epochs"] = checkpoint.config.epochs;
    train["batch_size"] = checkpoint.config.batch_size;
    train["learning_rate"] = checkpoint.config.learning_rate;
    train["weight_decay"] = checkpoint.config.weight_decay;
    // The effective fairness weight; erm runs store 0 here, so the
    // checkpoint of an erm run and of a cmac run with lambda 0 agree
    // byte for byte.
    train["lambda_cmac"] = checkpoint.config.effective_lambda();
    train["seed"] = checkpoint.config.seed;
    train["d_emb"] = checkpoint.config.d_emb;
    train["temperature"] = checkpoint.config.temperature;
    train["min_subgroup_batch"] = checkpoint.config.min_subgroup_batch;
    train["text_jitter"] = checkpoint.config.text_jitter;
    train["warmup_epochs"] = checkpoint.config.warmup_epochs;
    train["fairness_scores"] =
        checkpoint.config.fairness_scores == FairnessScores::class_certainty
            ? "class_certainty"
            : "batch_margins";
    train["kernel"] = kernel_to_json(checkpoint.config.kernel);
    j["train"] = std::move(train);
    json enc;
    enc["temperature"] = checkpoint.model.encoders.temperature;
    enc["image_weights"] = matrix_to_json(checkpoint.model.encoders.image_weights);
    enc["text_weights"] = matrix_to_json(checkpoint.model.encoders.text_weights);
    j["encoders"] = std::move(enc);
    j["class_texts"] = matrix_to_json(checkpoint.model.class_texts.class_texts);
    json hist = json::array();
    for (const auto& e : checkpoint.model.history) {
        json row;
        row["clip"] = e.clip;
        row["cmac"] = e.cmac;
        row["total"] = e.total;
        hist.push_back(std::move(row));
    }
    j["history"] = std::move(hist);
    j["single_subgroup_warning"] = checkpoint.model.single_subgroup_warning;
    write_text_file(path, canonical(j));
}

Checkpoint read_checkpoint(const std::string& path) {
    const json j = parse_json(slurp_file(path), path);
    check_schema(j, path, "cmacmmd.checkpoint");
    check_keys(j, "", {"schema", "version", "train", "encoders", "class_texts", "history",
                       "single_subgroup_warning"});
    Checkpoint ck;
    const json& train = j.at("train");
    check_keys(train, "train",
               {"epochs", "batch_size", "learning_rate", "weight_decay", "lambda_cmac", "seed",
                "d_emb", "temperature", "min_subgroup_batch", "text_jitter", "warmup_epochs",
                "fairness_scores", "kernel"});
    ck.config.epochs = train.at("epochs").get<int>();
    ck.config.batch_size = train.at("batch_size").get<int>();
    ck.config.learning_rate = train.at("learning_rate").get<double>();
    ck.config.weight_decay = train.at("weight_decay").get<double>();
    ck.config.lambda_cmac = train.at("lambda_cmac").get<double>();
    ck.config.seed = train.at("seed").get<std::uint64_t>();
    ck.config.mode = TrainMode::cmac;
    ck.config.d_emb = train.at("d_emb").get<int>();
    ck.config.temperature = train.at("temperature").get<double>();
    ck.config.min_subgroup_batch = train.at("min_subgroup_batch").get<int>();
    ck.config.text_jitter = train.at("text_jitter").get<double>();
    ck.config.warmup_epochs = train.at("warmup_epochs").get<int>();
    ck.config.fairness_scores = train.at("fairness_scores").get<std::string>() == "class_certainty"
                                    ? FairnessScores::class_certainty
                                    : FairnessScores::batch_margins;
    ck.config.kernel = kernel_from_json(train.at("kernel"), "train.kernel");

    const json& enc = j.at("encoders");
    check_keys(enc, "encoders", {"temperature", "image_weights", "text_weights"});
    ck.model.encoders.temperature = enc.at("temperature").get<double>();
    ck.model.encoders.image_weights = matrix_from_json(enc.at("image_weights"), "image_weights");
    ck.model.encoders.text_weights = matrix_from_json(enc.at("text_weights"), "text_weights");
    ck.model.class_texts.class_texts = matrix_from_json(j.at("class_texts"), "class_texts");
    for (const auto& row : j.at("history")) {
        EpochLosses e;
        e.clip = row.at("clip").get<double>();
        e.cmac = row.at("cmac").get<double>();
        e.total = row.at("total").get<double>();
        ck.model.history.push_back(e);
    }
    ck.model.single_subgroup_warning = j.at("single_subgroup_warning").get<bool>();

    // Prototypes are a pure function of the stored weights.
    Eigen::MatrixXd protos =
        ck.model.class_texts.class_texts * ck.model.encoders.text_weights;
    for (Eigen::Index r = 0; r < protos.rows(); ++r) protos.row(r) /= protos.row(r).norm();
    ck.model.prototypes.class_texts = std::move(protos);
    return ck;
}

// --- reports ----------------------------------------------------------------

std::string report_to_string(const FairnessReport& report) {
    json j;
    j["schema"] = "cmacmmd.report";
    j["version"] = kSchemaVersion;

    json cfg;
    cfg["threshold"] = report.config.threshold;
    cfg["zone"] = json::array({report.config.zone_lo, report.config.zone_hi});
    cfg["epsilon"] = report.config.epsilon;
    cfg["alpha"] = report.config.alpha;
    cfg["gamma"] = report.config.gamma;
    if (report.config.bootstrap) {
        json b;
        b["n_resamples"] = report.config.bootstrap->n_resamples;
        b["level"] = report.config.bootstrap->level;
        b["seed"] = report.config.bootstrap->seed;
        cfg["bootstrap"] = std::move(b);
    } else {
        cfg["bootstrap"] = nullptr;
    }
    j["config"] = std::move(cfg);

    json agg;
    agg["n"] = report.aggregate.n;
    agg["positives"] = report.aggregate.positives;
    agg["auc"] = report.aggregate.auc;
    agg["delta_tpr"] = report.aggregate.delta_tpr;
    agg["dpd"] = report.aggregate.dpd;
    agg["delta_fpr"] = report.aggregate.delta_fpr;
    agg["mean_deodds"] = report.aggregate.mean_deodds;
    agg["certainty_gap"] = report.aggregate.certainty_gap;
    json df;
    df["pass"] = report.aggregate.df_pass;
    df["unbounded"] = std::isinf(report.aggregate.df_worst_ratio);
    df["worst_ratio"] = std::isinf(report.aggregate.df_worst_ratio)
                            ? json(nullptr)
                            : json(report.aggregate.df_worst_ratio);
    agg["df"] = std::move(df);
    json ifa;
    ifa["pass"] = report.aggregate.if_alpha_pass;
    ifa["worst"] = report.aggregate.if_alpha_worst;
    agg["if_alpha"] = std::move(ifa);
    if (!report.aggregate.ci.empty()) agg["ci"] = ci_map_to_json(report.aggregate.ci);
    j["aggregate"] = std::move(agg);

    json subs = json::object();
    for (const auto& sg : report.subgroups) {
        json s;
        s["n"] = sg.n;
        s["positives"] = sg.positives;
        s["tp"] = sg.counts.tp;
        s["fp"] = sg.counts.fp;
        s["tn"] = sg.counts.tn;
        s["fn"] = sg.counts.fn;
        s["tpr"] = sg.tpr ? json(*sg.tpr) : json(nullptr);
        s["fpr"] = sg.fpr ? json(*sg.fpr) : json(nullptr);
        s["auc"] = sg.auc ? json(*sg.auc) : json(nullptr);
        s["deodds"] = sg.deodds ? json(*sg.deodds) : json(nullptr);
        s["positive_rate"] = sg.positive_rate;
        s["mean_certainty"] = sg.mean_certainty;
        s["zone_fraction"] = sg.zone_fraction;
        if (!sg.ci.empty()) s["ci"] = ci_map_to_json(sg.ci);
        subs[sg.key.str()] = std::move(s);
    }
    j["subgroups"] = std::move(subs);

    json flags;
    json zp = json::array();
    for (const auto& k : report.zero_positive_subgroups) zp.push_back(k.str());
    json zn = json::array();
    for (const auto& k : report.zero_negative_subgroups) zn.push_back(k.str());
    flags["zero_positive_subgroups"] = std::move(zp);
    flags["zero_negative_subgroups"] = std::move(zn);
    flags["warnings"] = report.warnings;
    j["flags"] = std::move(flags);

    return canonical(j);
}

void write_report(const std::string& path, const FairnessReport& report) {
    write_text_file(path, report_to_string(report));
}

FairnessReport read_report(const std::string& path) {
    const json j = parse_json(slurp_file(path), path);
    check_schema(j, path, "cmacmmd.report");
    FairnessReport report;

    const json& cfg = j.at("config");
    report.config.threshold = cfg.at("threshold").get<double>();
    report.config.zone_lo = cfg.at("zone")[0].get<double>();
    report.config.zone_hi = cfg.at("zone")[1].get<double>();
    report.config.epsilon = cfg.at("epsilon").get<double>();
    report.config.alpha = cfg.at("alpha").get<double>();
    report.config.gamma = cfg.at("gamma").get<double>();
    if (!cfg.at("bootstrap").is_null()) {
        BootstrapConfig b;
        b.n_resamples = cfg["bootstrap"].at("n_resamples").get<int>();
        b.level = cfg["bootstrap"].at("level").get<double>();
        b.seed = cfg["bootstrap"].at("seed").get<std::uint64_t>();
        report.config.bootstrap = b;
    }

    const json& agg = j.at("aggregate");
    report.aggregate.n = agg.at("n").get<std::int64_t>();
    report.aggregate.positives = agg.at("positives").get<std::int64_t>();
    report.aggregate.auc = agg.at("auc").get<double>();
    report.aggregate.delta_tpr = agg.at("delta_tpr").get<double>();
    report.aggregate.dpd = agg.at("dpd").get<double>();
    report.aggregate.delta_fpr = agg.at("delta_fpr").get<double>();
    report.aggregate.mean_deodds = agg.at("mean_deodds").get<double>();
    report.aggregate.certainty_gap = agg.at("certainty_gap").get<double>();
    report.aggregate.df_pass = agg.at("df").at("pass").get<bool>();
    report.aggregate.df_worst_ratio = agg.at("df").at("unbounded").get<bool>()
                                          ? std::numeric_limits<double>::infinity()
                                          : agg.at("df").at("worst_ratio").get<double>();
    report.aggregate.if_alpha_pass = agg.at("if_alpha").at("pass").get<bool>();
    report.aggregate.if_alpha_worst = agg.at("if_alpha").at("worst").get<double>();
    if (agg.contains("ci")) {
        for (const auto& [name, ci] : agg["ci"].items()) {
            report.aggregate.ci[name] = ci_from_json(ci);
        }
    }

    for (const auto& [key, s] : j.at("subgroups").items()) {
        SubgroupReport sg;
        sg.key = key_from_string(key);
        sg.n = s.at("n").get<std::int64_t>();
        sg.positives = s.at("positives").get<std::int64_t>();
        sg.counts.tp = s.at("tp").get<std::int64_t>();
        sg.counts.fp = s.at("fp").get<std::int64_t>();
        sg.counts.tn = s.at("tn").get<std::int64_t>();
        sg.counts.fn = s.at("fn").get<std::int64_t>();
        if (!s.at("tpr").is_null()) sg.tpr = s["tpr"].get<double>();
        if (!s.at("fpr").is_null()) sg.fpr = s["fpr"].get<double>();
        if (!s.at("auc").is_null()) sg.auc = s["auc"].get<double>();
        if (!s.at("deodds").is_null()) sg.deodds = s["deodds"].get<double>();
        sg.positive_rate = s.at("positive_rate").get<double>();
        sg.mean_certainty = s.at("mean_certainty").get<double>();
        sg.zone_fraction = s.at("zone_fraction").get<double>();
        if (s.contains("ci")) {
            for (const auto& [name, ci] : s["ci"].items()) sg.ci[name] = ci_from_json(ci);
        }
        report.subgroups.push_back(std::move(sg));
    }

    const json& flags = j.at("flags");
    for (const auto& k : flags.at("zero_positive_subgroups")) {
        report.zero_positive_subgroups.push_back(key_from_string(k.get<std::string>()));
    }
    for (const auto& k : flags.at("zero_negative_subgroups")) {
        report.zero_negative_subgroups.push_back(key_from_string(k.get<std::string>()));
    }
    report.warnings = flags.at("warnings").get<std::vector<std::string>>();
    return report;
}

// --- plot data ---------------------------------------------------------------

void write_kde_csv(const std::string& path,
                   const std::map<SubgroupKey, KdeCurve>& curves) {
    std::string out = "subgroup,x,density\n";
    for (const auto& [key, curve] : curves) {
        for (std::size_t i = 0; i < curve.x.size(); ++i) {
            out += key.str();
            out += ',';
            out += format_double(curve.x[i]);
            out += ',';
            out += format_double(curve.density[i]);
            out += '\n';
        }
    }
    write_text_file(path, out);
}

void write_subgroup_metrics_csv(const std::string& path, const FairnessReport& report) {
    std::string out =
        "subgroup,n,positives,tpr,fpr,auc,deodds,positive_rate,mean_certainty,zone_fraction\n";
    const auto opt = [](const std::optional<double>& v) {
        return v ? format_double(*v) : std::string();
    };
    for (const auto& sg : report.subgroups) {
        out += sg.key.str();
        out += ',' + std::to_string(sg.n);
        out += ',' + std::to_string(sg.positives);
        out += ',' + opt(sg.tpr);
        out += ',' + opt(sg.fpr);
        out += ',' + opt(sg.auc);
        out += ',' + opt(sg.deodds);
        out += ',' + format_double(sg.positive_rate);
        out += ',' + format_double(sg.mean_certainty);
        out += ',' + format_double(sg.zone_fraction);
        out += '\n';
    }
    write_text_file(path, out);
}

void write_history_csv(const std::string& path, const std::vector<EpochLosses>& history) {
    std::string out = "epoch,clip,cmac,total\n";
    for (std::size_t e = 0; e < history.size(); ++e) {
        out += std::to_string(e + 1);
        out += ',' + format_double(history[e].clip);
        out += ',' + format_double(history[e].cmac);
        out += ',' + format_double(history[e].total);
        out += '\n';
    }
    write_text_file(path, out);
}

// --- run configuration --------------------------------------------------------

ExperimentConfig load_config(const std::string& path) {
    const json j = parse_json(slurp_file(path), path);
    check_schema(j, path, "cmacmmd.config");
    check_keys(j, "", {"schema", "version", "cohort", "split", "train", "evaluate", "experiment"});

    ExperimentConfig cfg;

    if (j.contains("cohort")) {
        cfg.cohort = parse_cohort(j.at("cohort"));
    }

    if (j.contains("split")) {
        const json& split = j.at("split");
        check_keys(split, "split", {"fractions", "seed"});
        if (split.contains("fractions")) {
            const auto f = split.at("fractions").get<std::vector<double>>();
            if (f.size() != 3) throw SchemaError("split.fractions: need exactly 3 values");
            cfg.split_fractions = {f[0], f[1], f[2]};
        }
        if (split.contains("seed")) cfg.split_seed = split.at("seed").get<std::uint64_t>();
    }

    if (j.contains("train")) {
        const json& train = j.at("train");
        check_keys(train, "train",
                   {"epochs", "batch_size", "learning_rate", "weight_decay", "lambda_cmac",
                    "mode", "seed", "d_emb", "temperature", "min_subgroup_batch", "text_jitter",
                    "warmup_epochs", "fairness_scores", "kernel"});
        if (train.contains("epochs")) cfg.train.epochs = train.at("epochs").get<int>();
        if (cfg.train.epochs < 1) throw SchemaError("train.epochs: must be >= 1");
        if (train.contains("batch_size")) cfg.train.batch_size = train.at("batch_size").get<int>();
        if (cfg.train.batch_size < 2) throw SchemaError("train.batch_size: must be >= 2");
        if (train.contains("learning_rate")) {
            cfg.train.learning_rate = require_double(train, "train", "learning_rate");
            if (!(cfg.train.learning_rate > 0.0)) {
                throw SchemaError("train.learning_rate: must be positive");
            }
        }
        if (train.contains("weight_decay")) {
            cfg.train.weight_decay = require_double(train, "train", "weight_decay");
            if (cfg.train.weight_decay < 0.0) {
                throw SchemaError("train.weight_decay: must be nonnegative");
            }
        }
        if (train.contains("lambda_cmac")) {
            cfg.train.lambda_cmac = require_double(train, "train", "lambda_cmac");
            if (cfg.train.lambda_cmac < 0.0) {
                throw SchemaError("train.lambda_cmac: must be nonnegative");
            }
        }
        if (train.contains("mode")) {
            const std::string mode = train.at("mode").get<std::string>();
            if (mode == "erm") {
                cfg.train.mode = TrainMode::erm;
            } else if (mode == "cmac") {
                cfg.train.mode = TrainMode::cmac;
            } else {
                throw SchemaError("train.mode: expected \"erm\" or \"cmac\", got \"" + mode +
                                  "\"");
            }
        }
        if (train.contains("seed")) cfg.train.seed = train.at("seed").get<std::uint64_t>();
        if (train.contains("d_emb")) cfg.train.d_emb = train.at("d_emb").get<int>();
        if (cfg.train.d_emb < 2) throw SchemaError("train.d_emb: must be >= 2");
        if (train.contains("temperature")) {
            cfg.train.temperature = require_double(train, "train", "temperature");
            if (!(cfg.train.temperature > 0.0)) {
                throw SchemaError("train.temperature: must be positive");
            }
        }
        if (train.contains("min_subgroup_batch")) {
            cfg.train.min_subgroup_batch = train.at("min_subgroup_batch").get<int>();
            if (cfg.train.min_subgroup_batch < 1) {
                throw SchemaError("train.min_subgroup_batch: must be >= 1");
            }
        }
        if (train.contains("text_jitter")) {
            cfg.train.text_jitter = require_double(train, "train", "text_jitter");
            if (cfg.train.text_jitter < 0.0) {
                throw SchemaError("train.text_jitter: must be nonnegative");
            }
        }
        if (train.contains("warmup_epochs")) {
            cfg.train.warmup_epochs = train.at("warmup_epochs").get<int>();
            if (cfg.train.warmup_epochs < 0) {
                throw SchemaError("train.warmup_epochs: must be nonnegative");
            }
        }
        if (train.contains("fairness_scores")) {
            const std::string fs = train.at("fairness_scores").get<std::string>();
            if (fs == "batch_margins") {
                cfg.train.fairness_scores = FairnessScores::batch_margins;
            } else if (fs == "class_certainty") {
                cfg.train.fairness_scores = FairnessScores::class_certainty;
            } else {
                throw SchemaError("train.fairness_scores: expected \"batch_margins\" or "
                                  "\"class_certainty\"");
            }
        }
        if (train.contains("kernel")) {
            cfg.train.kernel = kernel_from_json(train.at("kernel"), "train.kernel");
        }
    }

    if (j.contains("evaluate")) {
        const json& ev = j.at("evaluate");
        check_keys(ev, "evaluate",
                   {"threshold", "zone", "epsilon", "alpha", "gamma", "bootstrap"});
        if (ev.contains("threshold")) {
            cfg.evaluate.threshold = require_double(ev, "evaluate", "threshold");
            if (!(cfg.evaluate.threshold > 0.0 && cfg.evaluate.threshold < 1.0)) {
                throw SchemaError("evaluate.threshold: must be inside (0, 1)");
            }
        }
        if (ev.contains("zone")) {
            const auto z = ev.at("zone").get<std::vector<double>>();
            if (z.size() != 2 || !(z[0] <= z[1])) {
                throw SchemaError("evaluate.zone: need [lo, hi] with lo <= hi");
            }
            cfg.evaluate.zone_lo = z[0];
            cfg.evaluate.zone_hi = z[1];
        }
        if (ev.contains("epsilon")) cfg.evaluate.epsilon = require_double(ev, "evaluate", "epsilon");
        if (ev.contains("alpha")) cfg.evaluate.alpha = require_double(ev, "evaluate", "alpha");
        if (ev.contains("gamma")) cfg.evaluate.gamma = require_double(ev, "evaluate", "gamma");
        if (ev.contains("bootstrap") && !ev.at("bootstrap").is_null()) {
            const json& b = ev.at("bootstrap");
            check_keys(b, "evaluate.bootstrap", {"n_resamples", "level", "seed"});
            BootstrapConfig bc;
            if (b.contains("n_resamples")) bc.n_resamples = b.at("n_resamples").get<int>();
            if (bc.n_resamples < 1) {
                throw SchemaError("evaluate.bootstrap.n_resamples: must be >= 1");
            }
            if (b.contains("level")) {
                bc.level = require_double(b, "evaluate.bootstrap", "level");
                if (!(bc.level > 0.0 && bc.level < 1.0)) {
                    throw SchemaError("evaluate.bootstrap.level: must be inside (0, 1)");
                }
            }
            if (b.contains("seed")) bc.seed = b.at("seed").get<std::uint64_t>();
            cfg.evaluate.bootstrap = bc;
        }
    }

    if (j.contains("experiment")) {
        const json& ex = j.at("experiment");
        check_keys(ex, "experiment", {"seeds"});
        if (ex.contains("seeds")) {
            cfg.seeds = ex.at("seeds").get<std::vector<std::uint64_t>>();
            if (cfg.seeds.empty()) throw SchemaError("experiment.seeds: need >= 1 seed");
        }
    }
    return cfg;
}

} // namespace cmac
