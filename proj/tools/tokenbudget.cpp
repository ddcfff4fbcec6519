#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "tokenbudget/tokenbudget.hpp"

namespace tb = tokenbudget;

namespace {

struct RunFlags {
    tb::HarnessConfig cfg;
    std::string strategy = "base";
    std::string ragged = "mean";
    std::optional<double> temperature;
    bool no_seed = false;
    bool quiet = false;
};

tb::RaggedPolicy parse_ragged(const std::string& s) {
    if (s == "mean") return tb::RaggedPolicy::mean_of_rates;
    if (s == "pooled") return tb::RaggedPolicy::pooled;
    throw std::invalid_argument("unknown ragged policy '" + s + "' (expected mean or pooled)");
}

std::string env_api_key() {
    for (const char* name : {"TOKENBUDGET_API_KEY", "OPENAI_API_KEY"})
        if (const char* v = std::getenv(name); v && *v) return v;
    return {};
}

void add_run_flags(CLI::App* cmd, RunFlags& f, bool with_strategy) {
    auto& c = f.cfg;
    cmd->add_option("--dataset", c.dataset, "Question file (JSONL); default: bundled toy set");
    cmd->add_option("-m,--model", c.models, "Model as NAME (in-process mock) or NAME@URL (chat endpoint)")
        ->required();
    cmd->add_option("-n,--samples", c.samples, "Samples per question per model")->capture_default_str();
    if (with_strategy) {
        cmd->add_option("-s,--strategy", f.strategy, "base, naive, terminator, fix-N, real-min, pred-diff")
            ->capture_default_str();
        cmd->add_option("--deadline", c.deadline, "Constant deadline in tokens (terminator, naive)");
        cmd->add_option("--budget-table", c.budget_table, "Budget table from calibrate");
        cmd->add_option("--bins", c.bins, "difficulty.tsv or a question_id/bin prediction file");
        cmd->add_option("--reference", c.reference, "Reference log for real-min deadlines");
        cmd->add_option("--tail-cap", c.forced_tail_cap, "Token cap of the forced final answer")
            ->capture_default_str();
        cmd->add_option("--templates", c.templates, "Prompt template file");
    }
    cmd->add_option("--judge", c.judge, "Judge model, NAME or NAME@URL (mock-judge is built in)");
    cmd->add_option("--judge-template", c.judge_template, "Rubric judging template file");
    cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
    cmd->add_option("-j,--parallelism", c.parallelism, "Concurrent episodes")->capture_default_str();
    cmd->add_option("-o,--output-dir", c.output_dir, "Output directory")->capture_default_str();
    cmd->add_option("--log-name", c.log_name, "Log file name inside the output directory");
    cmd->add_option("--safety-cap", c.safety_cap, "Token cap of base-mode generations")->capture_default_str();
    cmd->add_option("--fallback-max", c.fallback_max, "Deadline for never-solved questions/bins")
        ->capture_default_str();
    cmd->add_option("--bin-count", c.bin_count, "Difficulty bins")->capture_default_str();
    cmd->add_option("--ragged", f.ragged, "Unequal sample counts: mean (of per-model rates) or pooled")
        ->capture_default_str();
    cmd->add_option("--temperature", f.temperature, "Sampling temperature sent to endpoints");
    cmd->add_option("--max-error-fraction", c.max_error_fraction, "Fail when more samples than this error")
        ->capture_default_str();
    cmd->add_option("--endpoint-concurrency", c.endpoint_concurrency, "In-flight requests per remote model")
        ->capture_default_str();
    cmd->add_option("--retries", c.retries, "Retries on transport errors")->capture_default_str();
    cmd->add_option("--chars-per-token", c.chars_per_token, "Token estimate when usage is not reported")
        ->capture_default_str();
    cmd->add_flag("--endpoint-ignores-seed", f.no_seed, "Mark remote models non-replayable");
    cmd->add_flag("-q,--quiet", f.quiet, "No progress output");
}

void finish_flags(RunFlags& f) {
    f.cfg.strategy = tb::parse_strategy(f.strategy);
    f.cfg.ragged = parse_ragged(f.ragged);
    f.cfg.temperature = f.temperature;
    f.cfg.endpoint_honors_seed = !f.no_seed;
    f.cfg.api_key = env_api_key();
    f.cfg.progress = f.quiet ? nullptr : &std::cerr;
}

void print_outcome(const tb::RunOutcome& r) {
    std::cout << "log: " << r.log_path.string() << " (" << r.log.size() << " records)\n";
    if (!r.errors.empty()) std::cout << "errors: " << r.errors.size() << " (" << r.errors_path.string() << ")\n";
    std::cout << "mean spend: " << tb::mean_spend(r.log.records()) << "\n";
    const bool graded = std::all_of(r.log.records().begin(), r.log.records().end(),
                                    [](const auto& x) { return x.correct.has_value(); });
    if (graded && !r.log.empty()) std::cout << "accuracy: " << tb::accuracy(r.log.records()) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Token-budget decoding controller and overthinking evaluation harness"};
    app.require_subcommand(1);

    RunFlags cal, run;
    auto* calibrate = app.add_subcommand("calibrate", "Base-mode samples -> difficulties, bins, budget table");
    add_run_flags(calibrate, cal, false);

    auto* run_cmd = app.add_subcommand("run", "Evaluate a decoding strategy");
    add_run_flags(run_cmd, run, true);

    tb::ReportConfig rep;
    std::string rep_ragged = "mean";
    bool all_samples_min = false;
    auto* report = app.add_subcommand("report", "Metrics table and CSV exports from run logs");
    report->add_option("logs", rep.logs, "Run logs")->required()->check(CLI::ExistingFile);
    report->add_option("--reference", rep.reference, "Logs forming the observed-minimum pool")
        ->check(CLI::ExistingFile);
    report->add_option("--difficulties", rep.difficulties, "difficulty.tsv from calibrate")
        ->check(CLI::ExistingFile);
    report->add_option("-o,--output-dir", rep.output_dir)->capture_default_str();
    report->add_option("-k,--pass-k", rep.ks, "k values for pass@k")->capture_default_str();
    report->add_option("--ragged", rep_ragged, "mean or pooled")->capture_default_str();
    report->add_flag("--min-over-all-samples", all_samples_min,
                     "Observed minimum over every sample, not only correct ones");

    tb::ExportConfig exp;
    std::string exp_ragged = "mean";
    auto* export_cmd = app.add_subcommand("export", "Figure data: scatter, histogram, budget table CSVs");
    export_cmd->add_option("logs", exp.logs, "Run logs")->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--difficulties", exp.difficulties)->check(CLI::ExistingFile);
    export_cmd->add_option("--budget-table", exp.budget_table)->check(CLI::ExistingFile);
    export_cmd->add_option("-o,--output-dir", exp.output_dir)->capture_default_str();
    export_cmd->add_option("--ragged", exp_ragged)->capture_default_str();

    std::string host = "127.0.0.1";
    int port = 8089;
    std::vector<std::string> serve_models{"mock"};
    std::filesystem::path serve_dataset;
    long token_delay_us = 0;
    bool no_usage = false;
    auto* serve = app.add_subcommand("serve-mock", "Serve mock models over the chat-completion protocol");
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("-m,--model", serve_models, "Model names to serve")->capture_default_str();
    serve->add_option("--dataset", serve_dataset, "Questions the mocks recognize; default: toy set");
    serve->add_option("--token-delay-us", token_delay_us, "Delay between streamed tokens");
    serve->add_flag("--no-usage", no_usage, "Omit usage counts from responses");

    std::filesystem::path toy_out = "toy_dataset.jsonl";
    auto* toy = app.add_subcommand("toy-dataset", "Write the bundled toy dataset");
    toy->add_option("-o,--output", toy_out)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*calibrate) {
            finish_flags(cal);
            const auto r = tb::cmd_calibrate(cal.cfg);
            print_outcome(r.run);
            std::cout << "budget table: " << r.table_path.string() << "\n"
                      << "difficulties: " << r.difficulty_path.string() << "\n"
                      << tb::serialize_budget_table(r.table);
        } else if (*run_cmd) {
            finish_flags(run);
            print_outcome(tb::cmd_run(run.cfg));
        } else if (*report) {
            rep.ragged = parse_ragged(rep_ragged);
            rep.overthinking.correct_only_min = !all_samples_min;
            const auto r = tb::cmd_report(rep);
            std::cout << r.text;
            for (const auto& p : r.written) std::cout << "wrote " << p.string() << "\n";
        } else if (*export_cmd) {
            exp.ragged = parse_ragged(exp_ragged);
            for (const auto& p : tb::cmd_export(exp)) std::cout << "wrote " << p.string() << "\n";
        } else if (*serve) {
            auto questions = std::make_shared<const std::vector<tb::Question>>(
                serve_dataset.empty() ? tb::toy_dataset() : tb::load_questions(serve_dataset));
            tb::FakeChatEndpoint::Options opts;
            opts.host = host;
            opts.port = port;
            opts.token_delay = std::chrono::microseconds(token_delay_us);
            opts.report_usage = !no_usage;
            tb::FakeChatEndpoint endpoint(opts);
            for (const auto& m : serve_models)
                endpoint.add_model(m == "mock-judge" ? std::shared_ptr<tb::ModelHandle>(tb::make_mock_judge(questions))
                                                     : tb::make_population_model(m, questions));
            std::cout << "serving " << serve_models.size() << " model(s) on http://" << host << ":" << port
                      << "/v1" << std::endl;
            if (!endpoint.listen()) {
                std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
                return 1;
            }
        } else if (*toy) {
            tb::save_questions(tb::toy_dataset(), toy_out);
            std::cout << "wrote " << toy_out.string() << "\n";
        }
    } catch (const tb::HarnessError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
