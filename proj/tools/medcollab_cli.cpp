// medcollab command-line driver: run evaluations, sweep agent counts, inspect transcripts.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "medcollab/datasets.hpp"
#include "medcollab/eval.hpp"
#include "medcollab/gateway.hpp"
#include "medcollab/http_transport.hpp"
#include "medcollab/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

struct CliOptions {
    std::string dataset;
    std::string data_path;
    std::string format;
    std::string mode = "mc";
    int sc_samples = 5;
    std::optional<int> m;
    std::optional<int> n;
    std::optional<int> max_rounds;
    std::optional<int> sample_count;
    std::uint64_t seed = 42;
    std::string backend = "mock";
    std::string endpoint;
    std::string model = "gpt-4";
    std::string auth_env = "OPENAI_API_KEY";
    std::string mock_script_path;
    int jobs = 1;
    std::string out_dir = "out";
    bool no_cache = false;
    std::string cache_dir;
    std::string run_id;
    std::string config_path;
    std::string m_range;  // sweep only, "1..8"
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Fill fields the user did not pass on the command line from the JSON config file.
void apply_config_file(CliOptions& opt, const CLI::App& cmd) {
    if (opt.config_path.empty()) return;
    std::ifstream in(opt.config_path);
    if (!in) throw ConfigError("config file not found: " + opt.config_path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + opt.config_path);

    auto unset = [&](const char* flag) { return cmd.count(flag) == 0; };
    if (j.contains("dataset") && unset("--dataset")) opt.dataset = j["dataset"];
    if (j.contains("data_path") && unset("--data-path")) opt.data_path = j["data_path"];
    if (j.contains("format") && unset("--format")) opt.format = j["format"];
    if (j.contains("mode") && unset("--mode")) opt.mode = j["mode"];
    if (j.contains("sc_samples") && unset("--sc-samples")) opt.sc_samples = j["sc_samples"];
    if (j.contains("m") && unset("--m")) opt.m = j["m"].get<int>();
    if (j.contains("n") && unset("--n")) opt.n = j["n"].get<int>();
    if (j.contains("max_rounds") && unset("--max-rounds")) opt.max_rounds = j["max_rounds"].get<int>();
    if (j.contains("sample") && unset("--sample")) opt.sample_count = j["sample"].get<int>();
    if (j.contains("seed") && unset("--seed")) opt.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("backend") && unset("--backend")) opt.backend = j["backend"];
    if (j.contains("endpoint") && unset("--endpoint")) opt.endpoint = j["endpoint"];
    if (j.contains("model") && unset("--model")) opt.model = j["model"];
    if (j.contains("auth_env") && unset("--auth-env")) opt.auth_env = j["auth_env"];
    if (j.contains("mock_script") && unset("--mock-script")) opt.mock_script_path = j["mock_script"];
    if (j.contains("jobs") && unset("--jobs")) opt.jobs = j["jobs"].get<int>();
    if (j.contains("out") && unset("--out")) opt.out_dir = j["out"];
    if (j.contains("cache_dir") && unset("--cache-dir")) opt.cache_dir = j["cache_dir"];
}

std::string infer_format(const std::string& dataset) {
    const std::string d = lower(dataset);
    if (d == "medqa") return "medqa_jsonl";
    if (d == "medmcqa") return "medmcqa_jsonl";
    if (d == "pubmedqa") return "pubmedqa_jsonl";
    if (d.rfind("mmlu", 0) == 0) return "mmlu_csv";
    return "";
}

// Dataset presets carry the per-dataset expert counts (MedMCQA uses 4 question experts).
medcollab::MCConfig preset_config(const CliOptions& opt) {
    medcollab::MCConfig config;
    if (lower(opt.dataset) == "medmcqa") config.question_experts = 4;
    if (opt.m) config.question_experts = *opt.m;
    if (opt.n) config.option_experts = *opt.n;
    if (opt.max_rounds) config.max_rounds = *opt.max_rounds;
    config.model_id = opt.model;
    config.parallel_fanout = opt.jobs > 1;
    return config;
}

medcollab::Gateway make_gateway(const CliOptions& opt) {
    medcollab::BackendConfig backend;
    medcollab::MockScript script;
    if (opt.backend == "mock") {
        backend.kind = medcollab::BackendKind::mock;
        if (!opt.mock_script_path.empty())
            script = medcollab::MockScript::from_file(opt.mock_script_path);
    } else if (opt.backend == "http") {
        backend.kind = medcollab::BackendKind::http;
        if (opt.endpoint.empty()) throw ConfigError("--endpoint is required with --backend http");
        backend.endpoint_url = opt.endpoint;
        backend.auth_token_env_var = opt.auth_env;
        if (!opt.no_cache) {
            std::string dir = opt.cache_dir;
            if (dir.empty())
                if (const char* env = std::getenv("MC_CACHE_DIR")) dir = env;
            if (dir.empty()) dir = ".mc_cache";
            backend.cache_dir = fs::path(dir);
        }
    } else {
        throw ConfigError("--backend must be 'http' or 'mock'");
    }
    return medcollab::Gateway(backend, script);
}

std::vector<medcollab::QuestionInstance> load_instances(const CliOptions& opt) {
    if (opt.dataset.empty()) throw ConfigError("missing required field: --dataset");
    if (opt.data_path.empty()) throw ConfigError("missing required field: --data-path");
    medcollab::DatasetManifest manifest;
    manifest.dataset = opt.dataset;
    manifest.path = opt.data_path;
    manifest.format = opt.format.empty() ? infer_format(opt.dataset) : opt.format;
    if (manifest.format.empty())
        throw ConfigError("cannot infer --format for dataset '" + opt.dataset + "'");
    if (!fs::exists(manifest.path)) throw ConfigError("dataset file not found: " + opt.data_path);

    auto report = medcollab::load_dataset(manifest);
    for (const auto& w : report.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& e : report.errors) std::cerr << "bad record: " << e << "\n";
    if (report.instances.empty()) throw ConfigError("dataset yielded no valid instances");

    if (opt.sample_count)
        return medcollab::sample(report.instances, static_cast<std::size_t>(*opt.sample_count),
                                 opt.seed);
    return report.instances;
}

std::string default_run_id() {
    std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "run-%Y%m%d-%H%M%S", std::localtime(&now));
    return buf;
}

json manifest_json(const CliOptions& opt, const medcollab::MCConfig& config,
                   std::size_t instance_count) {
    return json{{"dataset", opt.dataset},
                {"data_path", opt.data_path},
                {"format", opt.format.empty() ? infer_format(opt.dataset) : opt.format},
                {"mode", opt.mode},
                {"sc_samples", opt.sc_samples},
                {"m", config.question_experts},
                {"n", config.option_experts},
                {"max_rounds", config.max_rounds},
                {"sample", opt.sample_count ? json(*opt.sample_count) : json(nullptr)},
                {"seed", opt.seed},
                {"backend", opt.backend},
                {"endpoint", opt.endpoint},
                {"auth_token_env_var", opt.backend == "http" ? opt.auth_env : ""},
                {"model", opt.model},
                {"jobs", opt.jobs},
                {"instances", instance_count}};
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
}

int cmd_run(const CliOptions& opt) {
    auto instances = load_instances(opt);
    medcollab::MCConfig config = preset_config(opt);
    medcollab::RunMode mode{medcollab::mode_from_string(opt.mode), opt.sc_samples};
    medcollab::Gateway gateway = make_gateway(opt);

    const std::string run_id = opt.run_id.empty() ? default_run_id() : opt.run_id;
    const fs::path out_dir = fs::path(opt.out_dir) / run_id;
    const fs::path transcripts_dir = out_dir / "transcripts";
    fs::create_directories(out_dir);

    medcollab::TranscriptSink sink;
    if (mode.kind == medcollab::ModeKind::mc) {
        fs::create_directories(transcripts_dir);
        sink = [&](const std::string& id, const medcollab::Transcript& t) {
            write_file(transcripts_dir / (id + ".json"), medcollab::to_json(t).dump(2) + "\n");
        };
    }

    write_file(out_dir / "manifest.json", manifest_json(opt, config, instances.size()).dump(2) + "\n");
    auto result = medcollab::run_eval(instances, mode, config, gateway, opt.jobs, sink);
    write_file(out_dir / "result.json", medcollab::to_json(result).dump(2) + "\n");
    write_file(out_dir / "result.csv", medcollab::to_csv(result));

    std::size_t failures = 0;
    for (const auto& r : result.records) failures += r.failure ? 1 : 0;
    std::cout << "run " << run_id << ": " << result.records.size() << " instances, accuracy "
              << medcollab::accuracy(result) << ", " << failures << " failures\n"
              << "outputs in " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_sweep(const CliOptions& opt) {
    int m_from = 0, m_to = 0;
    if (std::sscanf(opt.m_range.c_str(), "%d..%d", &m_from, &m_to) != 2 || m_from < 1 ||
        m_to < m_from)
        throw ConfigError("--m-range must look like '1..8' with a nondecreasing range");

    auto instances = load_instances(opt);
    medcollab::MCConfig config = preset_config(opt);
    medcollab::Gateway gateway = make_gateway(opt);

    const std::string run_id = opt.run_id.empty() ? default_run_id() : opt.run_id;
    const fs::path out_dir = fs::path(opt.out_dir) / run_id;
    fs::create_directories(out_dir);
    write_file(out_dir / "manifest.json", manifest_json(opt, config, instances.size()).dump(2) + "\n");

    const int fixed_n = opt.n.value_or(2);
    auto table = medcollab::agent_sweep(instances, m_from, m_to, fixed_n, config, gateway, opt.jobs);

    std::string csv = "m,accuracy\n";
    std::printf("%4s  %s\n", "m", "accuracy");
    for (const auto& [m, acc] : table) {
        csv += std::to_string(m) + "," + std::to_string(acc) + "\n";
        std::printf("%4d  %.4f\n", m, acc);
    }
    write_file(out_dir / "sweep.csv", csv);
    std::cout << "outputs in " << out_dir.string() << "\n";
    return kExitOk;
}

int cmd_inspect(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("transcript not found: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("transcript is not valid JSON: " + path);
    medcollab::Transcript t = medcollab::transcript_from_json(j);

    auto truncate = [](const std::string& s, std::size_t n = 160) {
        return s.size() <= n ? s : s.substr(0, n) + "...";
    };

    std::cout << "=== Transcript " << t.instance_id << " ===\n";
    if (!t.consensus_reached) std::cout << "*** NO CONSENSUS (cap reached) ***\n";
    std::cout << "\n[Expert Gathering]\n  question experts:";
    for (const auto& d : t.panel.question_experts.domains) std::cout << " " << d << ";";
    std::cout << "\n  option experts:";
    for (const auto& d : t.panel.option_experts.domains) std::cout << " " << d << ";";
    std::cout << "\n\n[Analysis Proposition]\n";
    for (const auto& [domain, text] : t.analyses.question_analyses)
        std::cout << "  Q/" << domain << ": " << truncate(text) << "\n";
    for (const auto& [domain, text] : t.analyses.option_analyses)
        std::cout << "  O/" << domain << ": " << truncate(text) << "\n";
    std::cout << "\n[Report Summarization]\n  Key Knowledge: "
              << truncate(t.initial_report.key_knowledge) << "\n  Total Analysis: "
              << truncate(t.initial_report.total_analysis) << "\n";
    std::cout << "\n[Collaborative Consultation]\n";
    for (const auto& round : t.rounds) {
        std::cout << "  round " << round.round_index << ":\n";
        for (const auto& [domain, vote] : round.votes) {
            std::cout << "    " << domain << ": " << (vote.agree ? "yes" : "no");
            if (vote.advice && !vote.advice->empty()) std::cout << " -- " << truncate(*vote.advice, 100);
            std::cout << "\n";
        }
        if (round.report_after.revision != round.report_before.revision)
            std::cout << "    report revised (rev " << round.report_before.revision << " -> "
                      << round.report_after.revision << ")\n";
    }
    std::cout << "\n[Decision Making]\n  final report rev " << t.final_report.revision
              << ", consensus " << (t.consensus_reached ? "reached" : "NOT reached") << "\n  answer: "
              << (t.answer ? t.answer->label : std::string("<none>")) << "\n";
    for (const auto& w : t.warnings) std::cout << "  warning: " << w << "\n";
    return kExitOk;
}

void add_common_flags(CLI::App* cmd, CliOptions& opt) {
    cmd->add_option("--dataset", opt.dataset, "Dataset name (medqa, medmcqa, pubmedqa, mmlu-<subtask>)");
    cmd->add_option("--data-path", opt.data_path, "Path to the dataset file");
    cmd->add_option("--format", opt.format,
                    "Input format (medqa_jsonl, medmcqa_jsonl, pubmedqa_jsonl, mmlu_csv)");
    cmd->add_option("--m", opt.m, "Question experts");
    cmd->add_option("--n", opt.n, "Option experts");
    cmd->add_option("--max-rounds", opt.max_rounds, "Consultation round cap");
    cmd->add_option("--sample", opt.sample_count, "Sample this many instances");
    cmd->add_option("--seed", opt.seed, "Sampling seed");
    cmd->add_option("--backend", opt.backend, "Backend kind: http or mock");
    cmd->add_option("--endpoint", opt.endpoint, "OpenAI-compatible base URL (http backend)");
    cmd->add_option("--model", opt.model, "Model id");
    cmd->add_option("--auth-env", opt.auth_env, "Env var holding the auth token");
    cmd->add_option("--mock-script", opt.mock_script_path, "Mock script JSON file");
    cmd->add_option("--jobs", opt.jobs, "Concurrent instance evaluations");
    cmd->add_option("--out", opt.out_dir, "Output directory");
    cmd->add_flag("--no-cache", opt.no_cache, "Disable the response cache");
    cmd->add_option("--cache-dir", opt.cache_dir, "Response cache directory");
    cmd->add_option("--run-id", opt.run_id, "Run directory name (default: timestamp)");
    cmd->add_option("--config", opt.config_path, "JSON config file (flags take precedence)");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-disciplinary collaboration pipeline for medical multiple-choice QA"};
    app.require_subcommand(1);

    CliOptions opt;
    CLI::App* run = app.add_subcommand("run", "Evaluate a dataset in a chosen answering mode");
    add_common_flags(run, opt);
    run->add_option("--mode", opt.mode, "mc, zs, zs-cot, or sc");
    run->add_option("--sc-samples", opt.sc_samples, "Self-consistency sample count");

    CLI::App* sweep = app.add_subcommand("sweep", "Vary the question-agent count and tabulate accuracy");
    add_common_flags(sweep, opt);
    sweep->add_option("--m-range", opt.m_range, "Question-agent range, e.g. 1..8")->required();

    std::string inspect_path;
    CLI::App* inspect = app.add_subcommand("inspect", "Render a transcript as staged text");
    inspect->add_option("transcript", inspect_path, "Transcript JSON file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (run->parsed()) {
            apply_config_file(opt, *run);
            return cmd_run(opt);
        }
        if (sweep->parsed()) {
            apply_config_file(opt, *sweep);
            return cmd_sweep(opt);
        }
        return cmd_inspect(inspect_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const medcollab::SchemaVersionUnsupported& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const medcollab::BackendUnreachable& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const medcollab::AuthMissing& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const medcollab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "fatal: " << e.what() << "\n";
        return 1;
    }
}
