#pragma once

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tokenbudget/difficulty.hpp"
#include "tokenbudget/engine.hpp"
#include "tokenbudget/graders.hpp"
#include "tokenbudget/metrics.hpp"
#include "tokenbudget/remote_model.hpp"
#include "tokenbudget/run_log.hpp"
#include "tokenbudget/toy.hpp"

namespace tokenbudget {

/// A command's postcondition did not hold (e.g. too many errored samples).
class HarnessError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// "NAME" is served in-process by the mock population; "NAME@URL" is a
/// chat-completion endpoint.
struct ModelSpec {
    std::string name;
    std::string url;

    bool remote() const { return !url.empty(); }
};

inline ModelSpec parse_model_spec(const std::string& s) {
    const auto at = s.find('@');
    ModelSpec m{s.substr(0, at), at == std::string::npos ? std::string() : s.substr(at + 1)};
    if (m.name.empty() || (at != std::string::npos && m.url.empty()))
        throw std::invalid_argument("bad model spec '" + s + "' (expected NAME or NAME@URL)");
    return m;
}

struct HarnessConfig {
    std::filesystem::path dataset;   // empty: the bundled toy dataset
    std::vector<std::string> models; // NAME or NAME@URL
    std::int64_t samples = 10;
    Strategy strategy = Strategy::base();

    // Deadline sources. fix-N carries its own; real-min needs `reference`;
    // pred-diff needs `budget_table` plus `bins` or `judge`. terminator and
    // naive take the first available of deadline, table, reference.
    std::optional<Tokens> deadline;
    std::filesystem::path budget_table;
    std::filesystem::path bins;
    std::filesystem::path reference;
    std::string judge;  // NAME or NAME@URL; "mock-judge" is built in

    std::uint64_t seed = 0;
    int parallelism = 4;
    std::filesystem::path output_dir = "out";
    std::string log_name;  // default: calibration.jsonl / run-<strategy>.jsonl

    Tokens safety_cap = 16384;
    Tokens forced_tail_cap = 64;
    Tokens fallback_max = kDefaultFallbackMax;
    int bin_count = 10;
    RaggedPolicy ragged = RaggedPolicy::mean_of_rates;
    std::optional<double> temperature;
    std::filesystem::path templates;
    std::filesystem::path judge_template;
    double max_error_fraction = 0.5;

    // Remote endpoints
    std::string api_key;
    int endpoint_concurrency = 4;
    int retries = 2;
    double chars_per_token = 4.0;
    bool endpoint_honors_seed = true;

    /// Overrides model construction (tests inject handles here).
    std::function<std::shared_ptr<ModelHandle>(const ModelSpec&)> model_factory;
    std::ostream* progress = nullptr;
};

inline void validate(const HarnessConfig& c) {
    auto fail = [](const std::string& what) { throw std::invalid_argument(what); };
    if (c.samples < 1) fail("samples per question must be >= 1");
    if (c.parallelism < 1) fail("parallelism must be >= 1");
    if (c.models.empty()) fail("at least one model is required");
    for (const auto& m : c.models) parse_model_spec(m);
    if (c.bin_count < 1) fail("bin count must be >= 1");
    if (c.safety_cap < 1 || c.forced_tail_cap < 1) fail("caps must be positive");
    if (c.fallback_max < 1) fail("fallback max must be positive");
    if (c.deadline && *c.deadline < 1) fail("deadline must be positive");
    if (!(c.max_error_fraction >= 0.0 && c.max_error_fraction <= 1.0)) fail("max error fraction must be in [0,1]");
    using K = Strategy::Kind;
    switch (c.strategy.kind) {
    case K::fixed:
        if (c.strategy.fixed_tokens < 1) fail("fix-N needs N >= 1");
        break;
    case K::real_min:
        if (c.reference.empty()) fail("real-min needs a reference log (--reference)");
        break;
    case K::pred_diff:
        if (c.budget_table.empty()) fail("pred-diff needs a budget table (--budget-table)");
        if (c.bins.empty() && c.judge.empty()) fail("pred-diff needs a difficulty/prediction file (--bins) or a judge");
        break;
    case K::terminator:
    case K::naive:
        if (!c.deadline && c.budget_table.empty() && c.reference.empty())
            fail(to_string(c.strategy) + " needs a deadline source (--deadline, --budget-table or --reference)");
        if (!c.deadline && !c.budget_table.empty() && c.bins.empty() && c.judge.empty())
            fail("a budget table deadline source also needs --bins or a judge");
        break;
    case K::base: break;
    }
}

/// Errored sample, kept out of the run log and written next to it.
struct SampleError {
    std::string question_id;
    std::string model_id;
    std::string strategy;
    std::int64_t sample_index = 0;
    std::uint64_t seed = 0;
    std::string message;
};

struct RunOutcome {
    RunLog log;
    std::vector<SampleError> errors;
    std::filesystem::path log_path;
    std::filesystem::path errors_path;
};

struct CalibrationResult {
    RunOutcome run;
    std::map<std::string, Difficulty> difficulties;
    DifficultyBinning binning;
    BudgetTable table;
    std::filesystem::path table_path;
    std::filesystem::path difficulty_path;
};

namespace harness_detail {

inline std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<Question> load_dataset(const HarnessConfig& c) {
    auto qs = c.dataset.empty() ? toy_dataset() : load_questions(c.dataset);
    if (qs.empty()) throw std::invalid_argument("dataset is empty");
    for (const auto& q : qs) {
        validate(q);
        if (q.grading == Grading::code)
            throw std::invalid_argument("question '" + q.id + "': code grading is not supported");
        if (q.grading == Grading::rubric && c.judge.empty())
            throw std::invalid_argument("question '" + q.id + "': rubric grading needs a judge (--judge)");
    }
    return qs;
}

inline std::string dataset_name(const HarnessConfig& c, const std::vector<Question>& qs) {
    if (!qs.front().dataset.empty()) return qs.front().dataset;
    return c.dataset.empty() ? "toy" : c.dataset.stem().string();
}

/// Digest over everything that determines the records of a run.
inline std::string config_digest(const HarnessConfig& c, const std::string& dataset, const std::string& mode) {
    std::string s = mode + "|" + dataset + "|" + std::to_string(c.samples) + "|" + to_string(c.strategy) + "|" +
                    std::to_string(c.seed) + "|" + std::to_string(c.safety_cap) + "|" +
                    std::to_string(c.forced_tail_cap) + "|" + std::to_string(c.fallback_max) + "|" +
                    std::to_string(c.bin_count) + "|" + (c.deadline ? std::to_string(*c.deadline) : "-") + "|" +
                    (c.temperature ? std::to_string(*c.temperature) : "-") + "|" + c.judge;
    for (const auto& m : c.models) s += "|" + m;
    for (const auto& p : {c.dataset, c.budget_table, c.bins, c.reference, c.templates, c.judge_template})
        s += "|" + (p.empty() || !std::filesystem::exists(p) ? std::string("-") : hex64(fnv1a64(read_file(p))));
    return hex64(fnv1a64(s));
}

inline std::shared_ptr<ModelHandle> make_model(const HarnessConfig& c, const ModelSpec& spec,
                                               const std::shared_ptr<const std::vector<Question>>& questions) {
    if (c.model_factory) return c.model_factory(spec);
    if (!spec.remote()) {
        if (spec.name == "mock-judge") return make_mock_judge(questions);
        return make_population_model(spec.name, questions);
    }
    EndpointConfig e;
    e.base_url = spec.url;
    e.model = spec.name;
    e.api_key = c.api_key;
    e.temperature = c.temperature;
    e.retries = c.retries;
    e.concurrency_limit = c.endpoint_concurrency;
    e.chars_per_token = c.chars_per_token;
    e.honors_seed = c.endpoint_honors_seed;
    return std::make_shared<ChatEndpointModel>(e);
}

struct Graded {
    std::optional<double> score;
    std::string judge_input;
    std::vector<Verdict> verdicts;
};

inline Graded grade_sample(const Question& q, const EpisodeResult& r, ModelHandle* judge,
                           const std::string& judge_template) {
    Graded g;
    switch (q.grading) {
    case Grading::exact_math:
        g.score = r.answer ? grade_math(*r.answer, *q.gold).score : 0.0;
        break;
    case Grading::rubric: {
        if (!judge) throw std::invalid_argument("rubric grading needs a judge");
        auto [input, path] = judge_input(r.answer, r.generated_text());
        const auto res = judge_requirements(input, q.requirements, *judge, q.prompt, judge_template);
        g.score = res.score;
        g.judge_input = path;
        g.verdicts = res.verdicts;
        break;
    }
    case Grading::none: break;
    case Grading::code: throw std::invalid_argument("code grading is not supported");
    }
    return g;
}

inline void write_errors(const std::vector<SampleError>& errors, const std::filesystem::path& path) {
    if (errors.empty()) {
        std::filesystem::remove(path);
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& e : errors) {
        nlohmann::ordered_json j{{"question_id", e.question_id}, {"model_id", e.model_id},
                                 {"strategy", e.strategy},       {"sample_index", e.sample_index},
                                 {"seed", e.seed},               {"error", e.message}};
        out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
}

/// Builds the per-question deadline for every question up front (judges are
/// queried once per question, sequentially).
inline std::map<std::string, Tokens> resolve_deadlines(const HarnessConfig& c, const std::vector<Question>& qs,
                                                       ModelHandle* judge) {
    using K = Strategy::Kind;
    std::unique_ptr<DeadlineEstimator> est;
    RunLog reference;
    auto table_source = [&]() -> std::unique_ptr<DeadlineEstimator> {
        auto table = load_budget_table(c.budget_table);
        if (!c.bins.empty()) return std::make_unique<TableLookupDeadline>(table, load_difficulty_file(c.bins).bins);
        if (!judge) throw std::invalid_argument("table deadlines need --bins or a judge");
        return std::make_unique<JudgeDeadline>(*judge, table);
    };
    auto reference_source = [&]() -> std::unique_ptr<DeadlineEstimator> {
        reference = load_log(c.reference);
        return std::make_unique<RealMinDeadline>(reference.records(), c.fallback_max);
    };
    switch (c.strategy.kind) {
    case K::base: return {};
    case K::fixed: est = std::make_unique<ConstantDeadline>(c.strategy.fixed_tokens); break;
    case K::real_min: est = reference_source(); break;
    case K::pred_diff: est = table_source(); break;
    case K::terminator:
    case K::naive:
        if (c.deadline)
            est = std::make_unique<ConstantDeadline>(*c.deadline);
        else if (!c.budget_table.empty())
            est = table_source();
        else
            est = reference_source();
        break;
    }
    std::map<std::string, Tokens> out;
    const Tokens floor = c.strategy.kind == K::naive ? 1 : 2;  // the interrupting engine needs two tokens
    for (const auto& q : qs) out[q.id] = std::max(floor, estimate_deadline(q, *est));
    return out;
}

inline EpisodePolicy policy_for(const HarnessConfig& c, std::optional<Tokens> deadline,
                                const PromptTemplates& templates) {
    EpisodePolicy p = c.strategy.kind == Strategy::Kind::base    ? EpisodePolicy::base()
                      : c.strategy.kind == Strategy::Kind::naive ? EpisodePolicy::naive(*deadline)
                                                                 : EpisodePolicy::terminator(*deadline);
    p.forced_tail_cap = c.forced_tail_cap;
    p.safety_cap = c.safety_cap;
    p.templates = templates;
    p.temperature = c.temperature;
    return p;
}

/// Fans samples out to worker threads, persists each record as it completes,
/// then rewrites the log in canonical order.
inline RunOutcome run_samples(const HarnessConfig& c, const std::vector<Question>& qs,
                              const std::vector<std::shared_ptr<ModelHandle>>& models, ModelHandle* judge,
                              const std::map<std::string, Tokens>& deadlines, const LogHeader& header,
                              const std::filesystem::path& log_path) {
    const PromptTemplates templates = c.templates.empty() ? PromptTemplates{} : load_templates(c.templates);
    std::string judge_template = c.judge_template.empty() ? std::string(kRubricJudgeTemplate) : read_file(c.judge_template);
    while (!judge_template.empty() && (judge_template.back() == '\n' || judge_template.back() == '\r'))
        judge_template.pop_back();

    struct Job {
        std::size_t q, m;
        std::int64_t idx;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < models.size(); ++m)
        for (std::size_t q = 0; q < qs.size(); ++q)
            for (std::int64_t i = 0; i < c.samples; ++i) jobs.push_back({q, m, i});

    LogWriter writer(log_path, header);
    std::mutex mu;
    std::vector<SampleError> errors;
    std::atomic<std::size_t> next{0}, done{0};
    const std::string strategy = to_string(c.strategy);

    auto work = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const Job job = jobs[j];
            const Question& q = qs[job.q];
            ModelHandle& model = *models[job.m];
            const std::uint64_t seed = derive_sample_seed(c.seed, q.id, job.idx);
            try {
                std::optional<Tokens> deadline;
                if (auto it = deadlines.find(q.id); it != deadlines.end()) deadline = it->second;
                EpisodePolicy policy = policy_for(c, deadline, templates);
                policy.seed = seed;
                const EpisodeResult r = run_episode(model, q, policy);
                const Graded g = grade_sample(q, r, judge, judge_template);

                SampleRecord rec;
                rec.question_id = q.id;
                rec.model_id = model.model_id();
                rec.strategy = c.strategy;
                rec.sample_index = job.idx;
                rec.seed = seed;
                rec.answer_text = r.answer.value_or("");
                rec.spend = r.spend;
                rec.correct = g.score;
                rec.interrupts = r.interrupts;
                rec.forced = r.forced;
                rec.deadline = r.deadline;
                rec.telemetry.temperature = c.temperature;
                rec.telemetry.unparsed = r.unparsed;
                rec.telemetry.truncated = r.truncated;
                rec.telemetry.estimated_tokens = r.estimated_tokens;
                rec.telemetry.judge_input = g.judge_input;
                rec.telemetry.verdicts = g.verdicts;
                writer.append(rec);
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                errors.push_back({q.id, model.model_id(), strategy, job.idx, seed, e.what()});
            }
            const auto n = ++done;
            if (c.progress && (n == jobs.size() || n % std::max<std::size_t>(1, jobs.size() / 10) == 0)) {
                std::lock_guard lock(mu);
                *c.progress << "  " << n << "/" << jobs.size() << " samples\n" << std::flush;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n = std::min<std::size_t>(static_cast<std::size_t>(c.parallelism), jobs.size());
        for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
    }

    std::map<std::string, std::size_t> q_order, m_order;
    for (std::size_t i = 0; i < qs.size(); ++i) q_order[qs[i].id] = i;
    for (std::size_t i = 0; i < models.size(); ++i) m_order.emplace(models[i]->model_id(), i);
    auto key = [&](const std::string& qid, const std::string& mid, std::int64_t idx) {
        return std::tuple(q_order.at(qid), m_order.at(mid), idx);
    };

    RunOutcome out;
    out.log_path = log_path;
    out.errors_path = log_path.string() + ".errors.jsonl";
    out.log = writer.finalize([&](const SampleRecord& a, const SampleRecord& b) {
        return key(a.question_id, a.model_id, a.sample_index) < key(b.question_id, b.model_id, b.sample_index);
    });
    std::sort(errors.begin(), errors.end(), [&](const SampleError& a, const SampleError& b) {
        return key(a.question_id, a.model_id, a.sample_index) < key(b.question_id, b.model_id, b.sample_index);
    });
    out.errors = std::move(errors);
    write_errors(out.errors, out.errors_path);

    const auto total = static_cast<double>(jobs.size());
    if (static_cast<double>(out.errors.size()) > c.max_error_fraction * total)
        throw HarnessError(std::to_string(out.errors.size()) + " of " + std::to_string(jobs.size()) +
                           " samples errored (see " + out.errors_path.string() + "); first: " +
                           out.errors.front().message);
    return out;
}

struct Setup {
    std::shared_ptr<const std::vector<Question>> questions;
    std::vector<std::shared_ptr<ModelHandle>> models;
    std::shared_ptr<ModelHandle> judge;
    LogHeader header;
};

inline Setup prepare(const HarnessConfig& c, const std::string& mode) {
    validate(c);
    Setup s;
    s.questions = std::make_shared<const std::vector<Question>>(load_dataset(c));
    std::set<std::string> ids;
    for (const auto& m : c.models) {
        auto handle = make_model(c, parse_model_spec(m), s.questions);
        if (!ids.insert(handle->model_id()).second)
            throw std::invalid_argument("model '" + handle->model_id() + "' configured twice");
        s.models.push_back(std::move(handle));
    }
    if (!c.judge.empty()) s.judge = make_model(c, parse_model_spec(c.judge), s.questions);
    const auto dataset = dataset_name(c, *s.questions);
    s.header.dataset = dataset;
    s.header.created_at = utc_now();
    s.header.config_digest = config_digest(c, dataset, mode);
    for (const auto& m : s.models)
        if (!m->capabilities().honors_seed) s.header.non_replayable.push_back(m->model_id());
    std::filesystem::create_directories(c.output_dir);
    return s;
}

}  // namespace harness_detail

/// Base-mode samples over a calibration set, then difficulties, equal-frequency
/// bins and the budget table. Writes calibration.jsonl, difficulty.tsv and
/// budget_table.tsv into the output directory.
inline CalibrationResult cmd_calibrate(HarnessConfig config) {
    using namespace harness_detail;
    config.strategy = Strategy::base();
    auto s = prepare(config, "calibrate");
    if (static_cast<std::int64_t>(s.questions->size()) < config.bin_count)
        throw std::invalid_argument("calibration set has " + std::to_string(s.questions->size()) +
                                    " questions, fewer than the " + std::to_string(config.bin_count) + " bins");
    for (const auto& q : *s.questions)
        if (q.grading == Grading::none)
            throw std::invalid_argument("calibration needs graded questions; '" + q.id + "' is ungraded");

    CalibrationResult out;
    const auto log_path = config.output_dir / (config.log_name.empty() ? "calibration.jsonl" : config.log_name);
    out.run = run_samples(config, *s.questions, s.models, s.judge.get(), {}, s.header, log_path);
    out.difficulties = difficulties_from_records(out.run.log.records(), config.ragged);
    out.binning = bin_questions(out.difficulties, config.bin_count);
    out.table = build_budget_table(out.run.log.records(), out.binning, config.fallback_max);
    out.table_path = config.output_dir / "budget_table.tsv";
    out.difficulty_path = config.output_dir / "difficulty.tsv";
    save_budget_table(out.table, out.table_path);
    save_difficulty_file(out.difficulties, out.binning, out.difficulty_path);
    return out;
}

/// n samples per question per model under the configured strategy.
inline RunOutcome cmd_run(const HarnessConfig& config) {
    using namespace harness_detail;
    auto s = prepare(config, "run");
    const auto deadlines = resolve_deadlines(config, *s.questions, s.judge.get());
    const auto name = config.log_name.empty() ? "run-" + to_string(config.strategy) + ".jsonl" : config.log_name;
    return run_samples(config, *s.questions, s.models, s.judge.get(), deadlines, s.header, config.output_dir / name);
}

struct ReportConfig {
    std::vector<std::filesystem::path> logs;
    std::vector<std::filesystem::path> reference;  // O_g pool; default: the logs themselves
    std::filesystem::path difficulties;            // difficulty.tsv; default: computed from the logs
    std::filesystem::path output_dir = "out";
    std::vector<std::int64_t> ks{5, 10};
    OverthinkingOptions overthinking;
    RaggedPolicy ragged = RaggedPolicy::mean_of_rates;
};

struct ReportResult {
    OverthinkingReport report;
    std::string text;
    std::string dataset;
    std::map<std::string, Difficulty> difficulties;  // empty when the logs are ungraded
    std::vector<std::filesystem::path> written;
};

namespace harness_detail {

/// Concatenates logs that share a dataset. Records repeated verbatim across
/// logs are kept once; conflicting records under one key are an error.
inline std::pair<std::string, std::vector<SampleRecord>> merge_logs(const std::vector<std::filesystem::path>& paths) {
    if (paths.empty()) throw std::invalid_argument("no logs given");
    std::string dataset;
    std::vector<SampleRecord> records;
    std::map<RecordKey, std::size_t> seen;
    for (const auto& p : paths) {
        const RunLog log = load_log(p);
        if (dataset.empty()) dataset = log.header().dataset;
        if (log.header().dataset != dataset)
            throw std::invalid_argument("log " + p.string() + " is for dataset '" + log.header().dataset +
                                        "', expected '" + dataset + "'");
        for (const auto& r : log.records()) {
            auto [it, inserted] = seen.emplace(key_of(r), records.size());
            if (inserted) {
                records.push_back(r);
            } else if (!(records[it->second] == r)) {
                throw DuplicateRecordError("conflicting records for key " + describe(it->first) + " in " + p.string());
            }
        }
    }
    return {dataset, records};
}

inline void write_text(const std::filesystem::path& p, const std::string& text, std::vector<std::filesystem::path>& written) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << text;
    written.push_back(p);
}

/// Difficulty file if given, else computed from the base-strategy records
/// (all records when there is no base run). Empty when records are ungraded.
inline std::map<std::string, Difficulty> report_difficulties(const std::filesystem::path& file,
                                                             const std::vector<SampleRecord>& records,
                                                             RaggedPolicy ragged) {
    if (!file.empty()) {
        auto f = load_difficulty_file(file);
        if (f.difficulties.empty())
            throw std::invalid_argument(file.string() + " holds bins only; a full difficulty file is needed");
        return f.difficulties;
    }
    std::vector<SampleRecord> base;
    for (const auto& r : records)
        if (r.strategy.kind == Strategy::Kind::base) base.push_back(r);
    const auto& src = base.empty() ? records : base;
    if (std::any_of(src.begin(), src.end(), [](const auto& r) { return !r.correct; })) return {};
    return difficulties_from_records(src, ragged);
}

}  // namespace harness_detail

/// Metrics table, base-relative changes and CSV exports (metrics, per-question
/// details, spend-vs-difficulty scatter, difficulty histogram).
inline ReportResult cmd_report(const ReportConfig& config) {
    using namespace harness_detail;
    ReportResult out;
    auto [dataset, records] = merge_logs(config.logs);
    out.dataset = dataset;
    std::vector<SampleRecord> pool = records;
    if (!config.reference.empty()) {
        auto [ref_dataset, ref] = merge_logs(config.reference);
        if (ref_dataset != dataset)
            throw std::invalid_argument("reference logs are for dataset '" + ref_dataset + "', expected '" +
                                        dataset + "'");
        pool = std::move(ref);
    }
    out.report = build_report(records, pool, config.ks, config.overthinking);
    out.text = "dataset: " + dataset + "\n" + render_report(out.report);
    out.difficulties = report_difficulties(config.difficulties, records, config.ragged);

    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir / "report.txt", out.text, out.written);
    write_text(config.output_dir / "metrics.csv", report_csv(out.report), out.written);
    write_text(config.output_dir / "details.csv", details_csv(out.report), out.written);
    if (!out.difficulties.empty()) {
        write_text(config.output_dir / "scatter.csv", scatter_csv(export_scatter(records, out.difficulties)),
                   out.written);
        write_text(config.output_dir / "histogram.csv", histogram_csv(dataset, difficulty_histogram(out.difficulties)),
                   out.written);
    } else {
        out.text += "\n(no difficulty data: scatter and histogram skipped)\n";
    }
    return out;
}

struct ExportConfig {
    std::vector<std::filesystem::path> logs;
    std::filesystem::path difficulties;
    std::filesystem::path budget_table;
    std::filesystem::path output_dir = "out";
    RaggedPolicy ragged = RaggedPolicy::mean_of_rates;
};

/// Figure data only: scatter, histogram, and the budget table as CSV.
inline std::vector<std::filesystem::path> cmd_export(const ExportConfig& config) {
    using namespace harness_detail;
    auto [dataset, records] = merge_logs(config.logs);
    const auto difficulties = report_difficulties(config.difficulties, records, config.ragged);
    if (difficulties.empty()) throw std::invalid_argument("export needs graded logs or a difficulty file");
    std::vector<std::filesystem::path> written;
    std::filesystem::create_directories(config.output_dir);
    write_text(config.output_dir / "scatter.csv", scatter_csv(export_scatter(records, difficulties)), written);
    write_text(config.output_dir / "histogram.csv", histogram_csv(dataset, difficulty_histogram(difficulties)), written);
    if (!config.budget_table.empty()) {
        const auto t = load_budget_table(config.budget_table);
        std::string csv = "bin,upper_edge,budget,support\n";
        for (const auto& b : t.bins)
            csv += std::to_string(b.index) + "," + report_detail::exact(b.upper_edge) + "," + std::to_string(b.budget) +
                   "," + std::to_string(b.support) + "\n";
        write_text(config.output_dir / "budget_table.csv", csv, written);
    }
    return written;
}

}  // namespace tokenbudget
