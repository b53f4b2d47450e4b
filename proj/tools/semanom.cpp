// semanom: command-line front end for annotation, review, evaluation and audit.

#include <algorithm>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "semanom/agent/pipeline.hpp"
#include "semanom/anomaly_parser.hpp"
#include "semanom/audit_metrics.hpp"
#include "semanom/dataset_io.hpp"
#include "semanom/match_metrics.hpp"
#include "semanom/review.hpp"
#include "semanom/review_server.hpp"
#include "semanom/util/parallel.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace semanom;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitFailure = 2;

class Manifest {
public:
    explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {
        body_["command"] = command_;
        body_["inputs"] = json::object();
        body_["outputs"] = json::object();
        body_["config"] = json::object();
    }
    json& operator[](const char* key) { return body_[key]; }
    void input(const std::string& name, const fs::path& p) { body_["inputs"][name] = p.string(); }
    void output(const std::string& name, const fs::path& p) { body_["outputs"][name] = p.string(); }

    void write(const fs::path& path) {
        body_["wall_time_s"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        body_["finished_at"] = format_timestamp(now_utc());
        write_text_file(path, body_.dump(2) + "\n");
    }

private:
    std::string command_;
    std::chrono::steady_clock::time_point start_;
    json body_;
};

// report.json -> report.manifest.json
fs::path manifest_path_for(const fs::path& output) {
    return output.parent_path() / (output.stem().string() + ".manifest.json");
}

void emit(const fs::path& out, const std::string& text) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    if (!out.empty()) write_text_file(out, text.back() == '\n' ? text : text + "\n");
}

std::vector<double> parse_threshold_list(const std::string& text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find(',', start);
        if (end == std::string::npos) end = text.size();
        const auto item = trim(std::string_view(text).substr(start, end - start));
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError(fmt::format("bad threshold '{}'", item));
        }
        start = end + 1;
    }
    return out;
}

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".webp", ".gif", ".bmp"};
    return kExt.count(ext) > 0;
}

// ---------------------------------------------------------------- annotate

struct AnnotateArgs {
    fs::path images;
    fs::path config;
    fs::path out;
    std::string backend = "http";
    std::size_t jobs = 1;
};

int run_annotate(const AnnotateArgs& args) {
    auto config = args.config.empty() ? agent::PipelineConfig{} : agent::load_pipeline_config(args.config);
    if (!config.cache_dir) config.cache_dir = args.out / "cache";

    std::unique_ptr<agent::ChatBackend> backend;
    if (args.backend == "mock") {
        backend = std::make_unique<agent::ScriptedChatBackend>(agent::canned_reply);
    } else if (args.backend == "http") {
        if (config.endpoint.empty())
            throw ValidationError("config has no endpoint; set 'endpoint = ...' or pass --backend mock");
        agent::HttpChatOptions opts;
        opts.endpoint = config.endpoint;
        opts.timeout = config.timeout;
        if (const char* key = std::getenv(config.api_key_env.c_str())) opts.api_key = key;
        backend = std::make_unique<agent::HttpChatBackend>(opts);
    } else {
        throw ValidationError(fmt::format("unknown backend '{}' (expected http|mock)", args.backend));
    }

    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(args.images))
        if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
    std::sort(images.begin(), images.end());
    if (images.empty()) throw ValidationError(fmt::format("no images found in '{}'", args.images.string()));

    struct Outcome {
        std::optional<agent::PipelineResult> result;
        std::string error;
    };
    std::vector<Outcome> outcomes(images.size());
    util::parallel_for(images.size(), args.jobs, [&](std::size_t i) {
        const auto id = images[i].stem().string();
        try {
            outcomes[i].result = agent::run_pipeline(images[i], id, config, *backend);
            write_text_file(args.out / "states" / (id + ".json"), to_json(outcomes[i].result->state).dump(2) + "\n");
        } catch (const std::exception& e) {
            outcomes[i].error = e.what();
            spdlog::error("image '{}': {}", id, e.what());
        }
    });

    std::vector<ImageAnnotation> annotations;
    agent::TokenUsage total;
    agent::TokenUsage fresh;
    std::size_t calls = 0;
    std::size_t hits = 0;
    json per_image = json::array();
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto id = images[i].stem().string();
        if (!outcomes[i].result) {
            per_image.push_back({{"image_id", id}, {"status", "failed"}, {"error", outcomes[i].error}});
            continue;
        }
        const auto& r = *outcomes[i].result;
        annotations.push_back(agent::to_annotation(r.state, images[i].string()));
        total += r.state.total_tokens();
        fresh += r.stats.fresh_tokens;
        calls += r.stats.backend_calls;
        hits += r.stats.cache_hits;
        per_image.push_back({{"image_id", id},
                             {"status", "ok"},
                             {"anomalies", r.state.final_anomalies.size()},
                             {"warnings", r.state.warnings.size()}});
    }
    const auto jsonl = args.out / "annotations.jsonl";
    save_annotations(annotations, jsonl);

    Manifest m("annotate");
    m.input("images", args.images);
    if (!args.config.empty()) m.input("config", args.config);
    m.output("annotations", jsonl);
    m.output("states", args.out / "states");
    m["config"] = to_json(config);
    m["backend"] = args.backend;
    m["tokens"] = {{"prompt_tokens", total.prompt_tokens},
                   {"completion_tokens", total.completion_tokens},
                   {"total", total.total()}};
    m["new_tokens"] = {{"prompt_tokens", fresh.prompt_tokens},
                       {"completion_tokens", fresh.completion_tokens},
                       {"total", fresh.total()}};
    m["backend_calls"] = calls;
    m["cache_hits"] = hits;
    m["images"] = per_image;
    m.write(args.out / "manifest.json");

    const auto ok = annotations.size();
    std::cout << fmt::format("annotated {}/{} images; {} tokens ({} new); {} backend calls\n", ok, images.size(),
                             total.total(), fresh.total(), calls);
    if (ok == images.size()) return kExitOk;
    if (ok == 0) {
        std::cerr << "no image could be annotated; check the endpoint in the config, the API key in $"
                  << config.api_key_env << ", or run with --backend mock\n";
        return kExitFailure;
    }
    return kExitPartial;
}

// ---------------------------------------------------------------- review-serve

review::ReviewServer* g_server = nullptr;

void handle_signal(int) {
    if (g_server) g_server->stop();
}

struct ServeArgs {
    fs::path annotations;
    fs::path log;
    fs::path image_root;
    fs::path static_dir;
    std::string host = "127.0.0.1";
    int port = 8080;
    int lease_minutes = 15;
};

int run_review_serve(const ServeArgs& args) {
    auto annotations = load_annotations(args.annotations);
    review::ServiceOptions service_options;
    service_options.lease = std::chrono::minutes(args.lease_minutes);
    auto service = std::make_shared<review::ReviewService>(std::move(annotations), args.log, service_options);

    review::ServerOptions options;
    options.image_root = args.image_root.empty() ? args.annotations.parent_path() : args.image_root;
    if (options.image_root.empty()) options.image_root = ".";
    if (!args.static_dir.empty()) options.static_dir = args.static_dir;

    review::ReviewServer server(service, options);
    const int port = server.bind(args.host, args.port);

    Manifest m("review-serve");
    m.input("annotations", args.annotations);
    m.output("verdict_log", args.log);
    m["config"] = {{"host", args.host}, {"port", port}, {"lease_minutes", args.lease_minutes}};
    const auto manifest = manifest_path_for(args.log);

    g_server = &server;
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    const auto p = service->progress();
    std::cout << fmt::format("serving {} candidates ({} pending) on http://{}:{}\n", p.total, p.pending, args.host,
                             port)
              << std::flush;
    server.listen();
    g_server = nullptr;

    m["progress"] = to_json(service->progress());
    m.write(manifest);
    return kExitOk;
}

// ---------------------------------------------------------------- finalize

int run_finalize(const fs::path& annotations_path, const fs::path& verdicts_path, const fs::path& out,
                 fs::path decisions, bool partial) {
    const auto annotations = load_annotations(annotations_path);
    const auto verdicts = load_verdicts(verdicts_path);
    const auto result = review::finalize(annotations, verdicts, {partial});
    save_annotations(result.annotations, out);
    if (decisions.empty()) decisions = out.parent_path() / (out.stem().string() + ".decisions.jsonl");
    write_text_file(decisions, review::decisions_jsonl(result));

    const auto summary = review::summary_json(result);
    Manifest m("finalize");
    m.input("annotations", annotations_path);
    m.input("verdicts", verdicts_path);
    m.output("annotations", out);
    m.output("decisions", decisions);
    m["config"] = {{"partial", partial}};
    m["summary"] = summary;
    m.write(manifest_path_for(out));
    std::cout << summary.dump(2) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

struct EvalArgs {
    fs::path gt;
    fs::path pred;
    std::string backend = "surrogate";
    std::string endpoint;
    std::string scorer_id = "bertscore:distilbert-base-uncased";
    fs::path cache;
    int retries = 3;
    double alpha = 0.5;
    std::string thresholds = "0.7,0.8,0.9";
    std::string confidence = "inv_severity";
    std::size_t jobs = 1;
    fs::path out;
    fs::path csv;
};

EvaluationOptions evaluation_options(const EvalArgs& args) {
    EvaluationOptions o;
    o.thresholds = ThresholdSet(parse_threshold_list(args.thresholds));
    o.similarity.alpha = args.alpha;
    o.similarity.backend_id = args.backend;
    o.similarity.validate();
    o.confidence = parse_confidence_mode(args.confidence);
    o.jobs = args.jobs;
    return o;
}

std::unique_ptr<SimilarityBackend> similarity_backend(const EvalArgs& args) {
    std::optional<RemoteScorerOptions> remote;
    if (args.backend == "remote") {
        RemoteScorerOptions r;
        r.endpoint = args.endpoint;
        r.backend_id = args.scorer_id;
        r.retry.retries = args.retries;
        if (!args.cache.empty()) r.cache_file = args.cache;
        remote = r;
    }
    return make_similarity_backend(args.backend, remote);
}

json eval_config(const EvalArgs& args) {
    return {{"backend", args.backend},
            {"scorer_id", args.backend == "remote" ? args.scorer_id : "surrogate"},
            {"endpoint", args.endpoint},
            {"alpha", args.alpha},
            {"thresholds", parse_threshold_list(args.thresholds)},
            {"confidence", args.confidence},
            {"jobs", args.jobs}};
}

int run_evaluate(const EvalArgs& args, bool classified) {
    const auto options = evaluation_options(args);
    const auto gt = load_annotations(args.gt);
    const auto pred = load_predictions(args.pred);
    const auto backend = similarity_backend(args);

    json report;
    const MetricsReport* metrics = nullptr;
    std::optional<MetricsReport> plain;
    std::optional<ClassifiedReport> gated;
    if (classified) {
        gated = evaluate_classified(gt, pred, options, *backend);
        report = to_json(*gated);
        metrics = &gated->ungated;
    } else {
        plain = evaluate(gt, pred, options, *backend);
        report = to_json(*plain);
        metrics = &*plain;
    }
    emit(args.out, report.dump(2));
    if (!args.csv.empty()) write_text_file(args.csv, per_image_csv(*metrics));

    if (!args.out.empty()) {
        Manifest m(classified ? "evaluate-deepfake" : "evaluate");
        m.input("gt", args.gt);
        m.input("pred", args.pred);
        m.output("report", args.out);
        if (!args.csv.empty()) m.output("csv", args.csv);
        m["config"] = eval_config(args);
        m.write(manifest_path_for(args.out));
    }
    return kExitOk;
}

// ---------------------------------------------------------------- audit / stats

int run_audit(const fs::path& annotations_path, const std::string& group_by, const fs::path& out, std::size_t jobs) {
    if (group_by != "generator_tag")
        throw ValidationError(fmt::format("unsupported --group-by '{}' (only generator_tag)", group_by));
    const auto annotations = load_annotations(annotations_path);
    const auto board = audit_annotations(annotations, jobs);
    std::cout << leaderboard_table(board);
    if (!out.empty()) {
        write_text_file(out, to_json(board).dump(2) + "\n");
        Manifest m("audit");
        m.input("annotations", annotations_path);
        m.output("leaderboard", out);
        m["config"] = {{"group_by", group_by}};
        m.write(manifest_path_for(out));
    }
    return kExitOk;
}

int run_stats(const fs::path& annotations_path, const fs::path& after_path, const fs::path& out) {
    const auto before = dataset_stats(load_annotations(annotations_path));
    std::optional<DatasetStats> after;
    if (!after_path.empty()) after = dataset_stats(load_annotations(after_path));
    std::cout << stats_table(before, after);
    if (!out.empty()) {
        write_text_file(out, stats_comparison_json(before, after).dump(2) + "\n");
        Manifest m("stats");
        m.input("annotations", annotations_path);
        if (!after_path.empty()) m.input("after", after_path);
        m.output("stats", out);
        m.write(manifest_path_for(out));
    }
    return kExitOk;
}

// ---------------------------------------------------------------- parse

// Raw model answers ({"image_id", "answer", "source_answer"?} per line) to
// PredictionSet JSONL. Images whose answer yields no record keep an empty set.
int run_parse(const fs::path& raw, const fs::path& out) {
    const auto text = read_text_file(raw);
    std::vector<PredictionSet> sets;
    std::size_t line_no = 0;
    std::size_t skipped = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        const auto line = trim(std::string_view(text).substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error&) {
            throw ValidationError(fmt::format("{}:{}: malformed JSON", raw.string(), line_no));
        }
        PredictionSet p;
        p.image_id = j.at("image_id").get<std::string>();
        auto report = parse_anomaly_answer(j.value("answer", ""));
        skipped += report.skipped_blocks.size();
        for (const auto& s : report.skipped_blocks)
            spdlog::warn("{}: block {} skipped: {}", p.image_id, s.block_index + 1, s.reason);
        p.anomalies = std::move(report.records);
        if (j.contains("source_answer")) p.predicted_label = parse_source_answer(j["source_answer"].get<std::string>());
        sets.push_back(std::move(p));
    }
    save_predictions(sets, out);
    Manifest m("parse");
    m.input("raw", raw);
    m.output("predictions", out);
    m["skipped_blocks"] = skipped;
    m.write(manifest_path_for(out));
    std::cout << fmt::format("{} prediction sets written to {} ({} blocks skipped)\n", sets.size(), out.string(),
                             skipped);
    return skipped == 0 ? kExitOk : kExitPartial;
}

} // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_color_mt("semanom");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"Semantic anomaly annotation, review, evaluation and audit"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    AnnotateArgs ann;
    auto* annotate = app.add_subcommand("annotate", "Run the agent pipeline over a directory of images");
    annotate->add_option("--images", ann.images, "Image directory")->required()->check(CLI::ExistingDirectory);
    annotate->add_option("--config", ann.config, "Pipeline config (key=value or JSON)")->check(CLI::ExistingFile);
    annotate->add_option("--out", ann.out, "Output directory")->required();
    annotate->add_option("--backend", ann.backend, "http | mock")->check(CLI::IsMember({"http", "mock"}));
    annotate->add_option("--jobs", ann.jobs, "Images processed concurrently")->check(CLI::PositiveNumber);

    ServeArgs serve;
    auto* review_serve = app.add_subcommand("review-serve", "Serve the review queue over HTTP");
    review_serve->add_option("--annotations", serve.annotations, "agent_raw annotations JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    review_serve->add_option("--log", serve.log, "Append-only verdict log (JSONL)")->required();
    review_serve->add_option("--image-root", serve.image_root, "Base for relative image_uri values");
    review_serve->add_option("--static", serve.static_dir, "Directory with the built review UI");
    review_serve->add_option("--host", serve.host, "Bind address");
    review_serve->add_option("--port", serve.port, "Port (0 picks a free one)");
    review_serve->add_option("--lease-minutes", serve.lease_minutes, "How long a served item stays reserved");

    fs::path fin_annotations, fin_verdicts, fin_out, fin_decisions;
    bool fin_partial = false;
    auto* fin = app.add_subcommand("finalize", "Keep accepted candidates as hitl_verified annotations");
    fin->add_option("--annotations", fin_annotations, "agent_raw annotations JSONL")->required()->check(CLI::ExistingFile);
    fin->add_option("--verdicts", fin_verdicts, "Verdict log JSONL")->required()->check(CLI::ExistingFile);
    fin->add_option("--out", fin_out, "Finalized annotations JSONL")->required();
    fin->add_option("--decisions", fin_decisions, "Per-candidate decision export (JSONL)");
    fin->add_flag("--partial", fin_partial, "Drop candidates without a verdict instead of failing");

    EvalArgs eval;
    auto add_eval_options = [&eval](CLI::App* cmd) {
        cmd->add_option("--gt", eval.gt, "Ground-truth annotations JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--pred", eval.pred, "Predictions JSONL")->required()->check(CLI::ExistingFile);
        cmd->add_option("--backend", eval.backend, "surrogate | remote")->check(CLI::IsMember({"surrogate", "remote"}));
        cmd->add_option("--endpoint", eval.endpoint, "Scoring service URL (remote backend)");
        cmd->add_option("--scorer-id", eval.scorer_id, "Identifier of the remote scorer, part of the cache key");
        cmd->add_option("--cache", eval.cache, "Score cache file (remote backend)");
        cmd->add_option("--retries", eval.retries, "Retries per scoring request")->check(CLI::NonNegativeNumber);
        cmd->add_option("--alpha", eval.alpha, "Weight of the phenomenon view in Full")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--thresholds", eval.thresholds, "Comma-separated, increasing, in (0,1]");
        cmd->add_option("--confidence", eval.confidence, "inv_severity | severity | order")
            ->check(CLI::IsMember({"inv_severity", "severity", "order"}));
        cmd->add_option("--jobs", eval.jobs, "Images evaluated concurrently")->check(CLI::PositiveNumber);
        cmd->add_option("--out", eval.out, "Write the report JSON here");
        cmd->add_option("--csv", eval.csv, "Per-image, per-threshold breakdown");
    };
    auto* evaluate_cmd = app.add_subcommand("evaluate", "SemAP / SemF1 per view");
    add_eval_options(evaluate_cmd);
    auto* deepfake_cmd = app.add_subcommand("evaluate-deepfake", "Accuracy plus classification-gated metrics");
    add_eval_options(deepfake_cmd);

    fs::path audit_annotations, audit_out;
    std::string group_by = "generator_tag";
    std::size_t audit_jobs = 1;
    auto* audit = app.add_subcommand("audit", "MAI / AF / CAP leaderboard per generator");
    audit->add_option("--annotations", audit_annotations, "Annotations JSONL")->required()->check(CLI::ExistingFile);
    audit->add_option("--group-by", group_by, "Grouping field");
    audit->add_option("--out", audit_out, "Write the leaderboard JSON here");
    audit->add_option("--jobs", audit_jobs, "Worker threads")->check(CLI::PositiveNumber);

    fs::path stats_annotations, stats_after, stats_out;
    auto* stats = app.add_subcommand("stats", "Counts and severity histograms");
    stats->add_option("--annotations", stats_annotations, "Annotations JSONL")->required()->check(CLI::ExistingFile);
    stats->add_option("--after", stats_after, "Second file for a before/after comparison")->check(CLI::ExistingFile);
    stats->add_option("--out", stats_out, "Write the stats JSON here");

    fs::path parse_raw, parse_out;
    auto* parse = app.add_subcommand("parse", "Convert raw model answers into prediction JSONL");
    parse->add_option("--raw", parse_raw, "JSONL of {image_id, answer, source_answer?}")->required()->check(CLI::ExistingFile);
    parse->add_option("--out", parse_out, "Predictions JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitFailure;
    }
    if (verbose) spdlog::set_level(spdlog::level::debug);

    try {
        if (*annotate) return run_annotate(ann);
        if (*review_serve) return run_review_serve(serve);
        if (*fin) return run_finalize(fin_annotations, fin_verdicts, fin_out, fin_decisions, fin_partial);
        if (*evaluate_cmd) return run_evaluate(eval, false);
        if (*deepfake_cmd) return run_evaluate(eval, true);
        if (*audit) return run_audit(audit_annotations, group_by, audit_out, audit_jobs);
        if (*stats) return run_stats(stats_annotations, stats_after, stats_out);
        if (*parse) return run_parse(parse_raw, parse_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
