#include "semanom/audit_metrics.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "semanom/util/parallel.hpp"

namespace semanom {

using nlohmann::json;

ImageAudit audit_image(std::span<const AnomalyRecord> anomalies, std::string image_id) {
    ImageAudit audit;
    audit.image_id = std::move(image_id);
    for (const auto& a : anomalies) audit.mai += (100.0 - a.severity) / 100.0;
    audit.af = anomalies.size();
    audit.cap = audit.mai * static_cast<double>(audit.af);
    return audit;
}

std::vector<GeneratorAudit> audit_generator(std::span<const std::pair<std::string, ImageAudit>> images) {
    std::map<std::string, GeneratorAudit> by_tag;
    for (const auto& [tag, audit] : images) {
        auto& g = by_tag[tag];
        g.generator_tag = tag;
        g.mean_mai += audit.mai;
        g.mean_af += static_cast<double>(audit.af);
        g.mean_cap += audit.cap;
        ++g.image_count;
    }
    std::vector<GeneratorAudit> out;
    out.reserve(by_tag.size());
    for (auto& [tag, g] : by_tag) {
        const auto n = static_cast<double>(g.image_count);
        g.mean_mai /= n;
        g.mean_af /= n;
        g.mean_cap /= n;
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end(), [](const GeneratorAudit& a, const GeneratorAudit& b) {
        if (a.mean_cap != b.mean_cap) return a.mean_cap < b.mean_cap;
        if (a.mean_mai != b.mean_mai) return a.mean_mai < b.mean_mai;
        return a.generator_tag < b.generator_tag;
    });
    return out;
}

std::vector<GeneratorAudit> audit_annotations(std::span<const ImageAnnotation> annotations,
                                              std::size_t jobs) {
    std::vector<std::pair<std::string, ImageAudit>> audits(annotations.size());
    util::parallel_for(annotations.size(), jobs, [&](std::size_t i) {
        const auto& a = annotations[i];
        audits[i] = {a.generator_tag.value_or(kUnknownTag), audit_image(a.anomalies, a.image_id)};
    });
    return audit_generator(audits);
}

json to_json(const std::vector<GeneratorAudit>& leaderboard) {
    json rows = json::array();
    for (const auto& g : leaderboard) {
        rows.push_back({{"generator_tag", g.generator_tag},
                        {"mean_mai", g.mean_mai},
                        {"mean_af", g.mean_af},
                        {"mean_cap", g.mean_cap},
                        {"image_count", g.image_count}});
    }
    return rows;
}

namespace {

// Pads by code point count so the arrow headers line up.
std::string pad_right(const std::string& s, std::size_t width) {
    std::size_t cps = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++cps;
    return cps >= width ? s : s + std::string(width - cps, ' ');
}

std::string pad_left(const std::string& s, std::size_t width) {
    std::size_t cps = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++cps;
    return cps >= width ? s : std::string(width - cps, ' ') + s;
}

} // namespace

std::string leaderboard_table(const std::vector<GeneratorAudit>& leaderboard) {
    std::size_t tag_width = 3;
    for (const auto& g : leaderboard) tag_width = std::max(tag_width, g.generator_tag.size());
    constexpr std::size_t kNum = 10;
    std::string out = pad_right("tag", tag_width) + pad_left("MAI↓", kNum) + pad_left("AF↓", kNum) +
                      pad_left("CAP↓", kNum) + pad_left("n", 6) + "\n";
    for (const auto& g : leaderboard) {
        out += pad_right(g.generator_tag, tag_width) + pad_left(fmt::format("{:.2f}", g.mean_mai), kNum) +
               pad_left(fmt::format("{:.2f}", g.mean_af), kNum) +
               pad_left(fmt::format("{:.2f}", g.mean_cap), kNum) +
               pad_left(fmt::format("{}", g.image_count), 6) + "\n";
    }
    return out;
}

std::size_t severity_bin(double severity) {
    if (!(severity > 0.0)) return 0;
    return std::min<std::size_t>(9, static_cast<std::size_t>(std::floor(severity / 10.0)));
}

namespace {

void add_image(GroupStats& stats, const ImageAnnotation& a) {
    ++stats.image_count;
    stats.anomaly_count += a.anomalies.size();
    for (const auto& r : a.anomalies) ++stats.histogram[severity_bin(r.severity)];
}

void finish(GroupStats& stats) {
    stats.mean_anomalies = stats.image_count == 0
                               ? 0.0
                               : static_cast<double>(stats.anomaly_count) /
                                     static_cast<double>(stats.image_count);
}

} // namespace

DatasetStats dataset_stats(std::span<const ImageAnnotation> annotations) {
    DatasetStats stats;
    for (const auto& a : annotations) {
        add_image(stats.per_tag[a.generator_tag.value_or(kUnknownTag)], a);
        add_image(stats.overall, a);
    }
    for (auto& [tag, group] : stats.per_tag) finish(group);
    finish(stats.overall);
    return stats;
}

json to_json(const GroupStats& stats) {
    json bins = json::array();
    for (std::size_t b = 0; b < stats.histogram.size(); ++b) {
        bins.push_back({{"range", b == 9 ? std::string("[90,100]") : fmt::format("[{},{})", b * 10, b * 10 + 10)},
                        {"count", stats.histogram[b]}});
    }
    return {{"images", stats.image_count},
            {"anomalies", stats.anomaly_count},
            {"mean_anomalies_per_image", stats.mean_anomalies},
            {"severity_histogram", bins}};
}

json to_json(const DatasetStats& stats) {
    json tags = json::object();
    for (const auto& [tag, group] : stats.per_tag) tags[tag] = to_json(group);
    return {{"overall", to_json(stats.overall)}, {"per_tag", tags}};
}

json stats_comparison_json(const DatasetStats& before, const std::optional<DatasetStats>& after) {
    if (!after) return to_json(before);
    json j = {{"before", to_json(before)}, {"after", to_json(*after)}};
    j["anomaly_delta"] = static_cast<long long>(after->overall.anomaly_count) -
                         static_cast<long long>(before.overall.anomaly_count);
    return j;
}

std::string stats_table(const DatasetStats& before, const std::optional<DatasetStats>& after) {
    std::vector<std::string> tags;
    for (const auto& [tag, g] : before.per_tag) tags.push_back(tag);
    if (after) {
        for (const auto& [tag, g] : after->per_tag)
            if (!before.per_tag.count(tag)) tags.push_back(tag);
        std::sort(tags.begin(), tags.end());
    }
    std::size_t width = 7;
    for (const auto& t : tags) width = std::max(width, t.size());

    auto row = [&](const std::string& label, const GroupStats* b, const GroupStats* a) {
        std::string line = pad_right(label, width);
        auto cols = [&](const GroupStats* g) {
            if (!g) return pad_left("-", 8) + pad_left("-", 10) + pad_left("-", 10);
            return pad_left(fmt::format("{}", g->image_count), 8) +
                   pad_left(fmt::format("{}", g->anomaly_count), 10) +
                   pad_left(fmt::format("{:.2f}", g->mean_anomalies), 10);
        };
        line += cols(b);
        if (after) line += "  |" + cols(a);
        return line + "\n";
    };

    std::string header = pad_right("tag", width) + pad_left("images", 8) + pad_left("anomalies", 10) +
                         pad_left("per-img", 10);
    if (after) header += "  |" + pad_left("images", 8) + pad_left("anomalies", 10) + pad_left("per-img", 10);
    std::string out = header + "\n";
    auto find = [](const DatasetStats& s, const std::string& tag) -> const GroupStats* {
        auto it = s.per_tag.find(tag);
        return it == s.per_tag.end() ? nullptr : &it->second;
    };
    for (const auto& tag : tags) out += row(tag, find(before, tag), after ? find(*after, tag) : nullptr);
    out += row("overall", &before.overall, after ? &after->overall : nullptr);

    out += "\nseverity histogram (overall)\n";
    for (std::size_t b = 0; b < 10; ++b) {
        const auto label = b == 9 ? std::string("[90,100]") : fmt::format("[{},{})", b * 10, b * 10 + 10);
        out += pad_right(label, 10) + pad_left(fmt::format("{}", before.overall.histogram[b]), 8);
        if (after) out += pad_left(fmt::format("{}", after->overall.histogram[b]), 10);
        out += "\n";
    }
    return out;
}

} // namespace semanom
