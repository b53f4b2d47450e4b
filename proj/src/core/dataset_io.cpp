#include "semanom/dataset_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include <fmt/format.h>

#include "semanom/errors.hpp"

namespace semanom {

using nlohmann::json;

namespace {

const std::set<std::string> kAnomalyKeys = {"name", "phenomenon", "reasoning", "severity"};
const std::set<std::string> kAnnotationKeys = {"image_id",      "image_uri",  "source_label",
                                               "generator_tag", "provenance", "anomalies"};
const std::set<std::string> kPredictionKeys = {"image_id", "predicted_label", "anomalies"};

const json& require(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(fmt::format("missing field '{}'", key));
    return *it;
}

std::string require_string(const json& j, const char* key) {
    const json& v = require(j, key);
    if (!v.is_string()) throw ValidationError(fmt::format("field '{}' must be a string", key));
    return v.get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ValidationError(fmt::format("field '{}' must be a string or null", key));
    return it->get<std::string>();
}

json collect_extra(const json& j, const std::set<std::string>& known) {
    json extra = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) extra[it.key()] = it.value();
    }
    return extra;
}

void merge_extra(json& out, const json& extra) {
    if (!extra.is_object()) return;
    for (auto it = extra.begin(); it != extra.end(); ++it) {
        if (!out.contains(it.key())) out[it.key()] = it.value();
    }
}

json severity_to_json(double severity) {
    double integral = 0.0;
    if (std::modf(severity, &integral) == 0.0 && std::fabs(severity) < 1e15)
        return static_cast<long long>(integral);
    return severity;
}

std::vector<AnomalyRecord> anomalies_from_json(const json& j) {
    const json& arr = require(j, "anomalies");
    if (!arr.is_array()) throw ValidationError("field 'anomalies' must be an array");
    std::vector<AnomalyRecord> out;
    out.reserve(arr.size());
    for (std::size_t i = 0; i < arr.size(); ++i) {
        try {
            out.push_back(anomaly_from_json(arr[i]));
        } catch (const ValidationError& e) {
            throw ValidationError(fmt::format("anomalies[{}]: {}", i, e.what()));
        }
    }
    return out;
}

json anomalies_to_json(const std::vector<AnomalyRecord>& anomalies) {
    json arr = json::array();
    for (const auto& a : anomalies) arr.push_back(to_json(a));
    return arr;
}

std::string peek_image_id(const json& j) {
    if (j.is_object()) {
        auto it = j.find("image_id");
        if (it != j.end() && it->is_string()) return it->get<std::string>();
    }
    return {};
}

// Reads a JSONL file, handing each parsed object to `convert`. Errors are
// rethrown with the line number and image_id attached.
template <typename T, typename Convert>
std::vector<T> load_jsonl(const std::filesystem::path& path, Convert convert) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
    std::vector<T> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ValidationError(
                fmt::format("{}:{}: malformed JSON: {}", path.string(), line_no, e.what()));
        }
        if (!j.is_object())
            throw ValidationError(
                fmt::format("{}:{}: expected a JSON object", path.string(), line_no));
        try {
            out.push_back(convert(j));
        } catch (const ValidationError& e) {
            const auto id = peek_image_id(j);
            if (id.empty())
                throw ValidationError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
            throw ValidationError(
                fmt::format("{}:{}: image '{}': {}", path.string(), line_no, id, e.what()));
        }
    }
    return out;
}

template <typename T>
void require_unique_ids(const std::vector<T>& records, const std::filesystem::path& path) {
    std::unordered_set<std::string> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.image_id).second)
            throw ValidationError(
                fmt::format("{}: duplicate image_id '{}'", path.string(), r.image_id));
    }
}

} // namespace

json to_json(const AnomalyRecord& record) {
    json j = {{"name", record.name},
              {"phenomenon", record.phenomenon},
              {"reasoning", record.reasoning},
              {"severity", severity_to_json(record.severity)}};
    merge_extra(j, record.extra);
    return j;
}

json to_json(const ImageAnnotation& annotation) {
    json j = {{"image_id", annotation.image_id},
              {"image_uri", annotation.image_uri},
              {"source_label", nullptr},
              {"generator_tag", nullptr},
              {"provenance", std::string(to_string(annotation.provenance))},
              {"anomalies", anomalies_to_json(annotation.anomalies)}};
    if (annotation.source_label) j["source_label"] = std::string(to_string(*annotation.source_label));
    if (annotation.generator_tag) j["generator_tag"] = *annotation.generator_tag;
    merge_extra(j, annotation.extra);
    return j;
}

json to_json(const PredictionSet& prediction) {
    json j = {{"image_id", prediction.image_id},
              {"predicted_label", nullptr},
              {"anomalies", anomalies_to_json(prediction.anomalies)}};
    if (prediction.predicted_label)
        j["predicted_label"] = std::string(to_string(*prediction.predicted_label));
    merge_extra(j, prediction.extra);
    return j;
}

json to_json(const Verdict& verdict) {
    return {{"image_id", verdict.image_id},
            {"anomaly_index", verdict.anomaly_index},
            {"decision", std::string(to_string(verdict.decision))},
            {"annotator_id", verdict.annotator_id},
            {"timestamp", format_timestamp(verdict.timestamp)}};
}

AnomalyRecord anomaly_from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("anomaly must be a JSON object");
    AnomalyRecord r;
    r.name = require_string(j, "name");
    r.phenomenon = require_string(j, "phenomenon");
    r.reasoning = require_string(j, "reasoning");
    const json& sev = require(j, "severity");
    if (!sev.is_number()) throw ValidationError("field 'severity' must be a number");
    r.severity = sev.get<double>();
    r.extra = collect_extra(j, kAnomalyKeys);
    validate(r);
    return r;
}

ImageAnnotation annotation_from_json(const json& j) {
    ImageAnnotation a;
    a.image_id = require_string(j, "image_id");
    a.image_uri = optional_string(j, "image_uri").value_or("");
    if (auto label = optional_string(j, "source_label")) a.source_label = parse_source_label(*label);
    a.generator_tag = optional_string(j, "generator_tag");
    if (auto prov = optional_string(j, "provenance")) a.provenance = parse_provenance(*prov);
    a.anomalies = anomalies_from_json(j);
    a.extra = collect_extra(j, kAnnotationKeys);
    validate(a);
    return a;
}

PredictionSet prediction_from_json(const json& j) {
    PredictionSet p;
    p.image_id = require_string(j, "image_id");
    if (auto label = optional_string(j, "predicted_label"))
        p.predicted_label = parse_source_label(*label);
    p.anomalies = anomalies_from_json(j);
    p.extra = collect_extra(j, kPredictionKeys);
    validate(p);
    return p;
}

Verdict verdict_from_json(const json& j) {
    Verdict v;
    v.image_id = require_string(j, "image_id");
    const json& idx = require(j, "anomaly_index");
    if (!idx.is_number_integer() || idx.get<long long>() < 0)
        throw ValidationError("field 'anomaly_index' must be a non-negative integer");
    v.anomaly_index = idx.get<std::size_t>();
    v.decision = parse_decision(require_string(j, "decision"));
    v.annotator_id = require_string(j, "annotator_id");
    if (v.annotator_id.empty()) throw ValidationError("annotator_id must be non-empty");
    if (auto ts = optional_string(j, "timestamp")) v.timestamp = parse_timestamp(*ts);
    return v;
}

std::vector<ImageAnnotation> load_annotations(const std::filesystem::path& path) {
    auto out = load_jsonl<ImageAnnotation>(path, annotation_from_json);
    require_unique_ids(out, path);
    return out;
}

std::vector<PredictionSet> load_predictions(const std::filesystem::path& path) {
    auto out = load_jsonl<PredictionSet>(path, prediction_from_json);
    require_unique_ids(out, path);
    return out;
}

std::vector<Verdict> load_verdicts(const std::filesystem::path& path) {
    return load_jsonl<Verdict>(path, verdict_from_json);
}

std::string to_jsonl_line(const ImageAnnotation& annotation) {
    return to_json(annotation).dump();
}

std::string to_jsonl_line(const PredictionSet& prediction) {
    return to_json(prediction).dump();
}

namespace {

template <typename T>
void save_jsonl(std::span<const T> records, const std::filesystem::path& path) {
    std::string body;
    for (const auto& r : records) {
        validate(r);
        body += to_jsonl_line(r);
        body += '\n';
    }
    write_text_file(path, body);
}

} // namespace

void save_annotations(std::span<const ImageAnnotation> records, const std::filesystem::path& path) {
    save_jsonl(records, path);
}

void save_predictions(std::span<const PredictionSet> records, const std::filesystem::path& path) {
    save_jsonl(records, path);
}

void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError(fmt::format("write to '{}' failed", path.string()));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(fmt::format("cannot open '{}' for reading", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace semanom
