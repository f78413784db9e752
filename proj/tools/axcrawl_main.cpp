// axcrawl — crawl simulated apps through the accessibility interface, build
// interaction graphs, synthesize grounded UI tasks, and evaluate grounding
// predictors.

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "axcrawl/agents.hpp"
#include "axcrawl/crawler.hpp"
#include "axcrawl/eval.hpp"
#include "axcrawl/exec_predictor.hpp"
#include "axcrawl/graph.hpp"
#include "axcrawl/http_client.hpp"
#include "axcrawl/render.hpp"
#include "axcrawl/sim_backend.hpp"
#include "axcrawl/tasks.hpp"

namespace fs = std::filesystem;
using namespace axcrawl;

namespace {

constexpr int kExitBackendFailure = 1;
constexpr int kExitConfigError = 2;
constexpr int kExitSpecError = 3;
constexpr int kExitEmptyInputs = 4;

struct RunConfig {
    CrawlerConfig crawler;
    LlmClientConfig llm;
    std::string out_dir = "out";
    int parallel_workers = 1;
    std::string handlers = "on";
};

std::string read_file(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << bytes;
}

// Config file: JSON object whose keys are the kebab-case flag names. Flags
// given on the command line override the file.
void apply_config_file(const fs::path& path, RunConfig& cfg) {
    ordered_json j;
    try {
        j = ordered_json::parse(read_file(path));
    } catch (const std::exception& e) {
        throw std::invalid_argument("config file: " + std::string(e.what()));
    }
    for (const auto& [key, v] : j.items()) {
        if (key == "max-duration-minutes") cfg.crawler.max_duration_minutes = v.get<double>();
        else if (key == "default-text") cfg.crawler.default_text = v.get<std::string>();
        else if (key == "max-depth") cfg.crawler.max_depth = v.get<int>();
        else if (key == "cursor-move-before-click") cfg.crawler.cursor_move_before_click = v.get<bool>();
        else if (key == "agent-usage") cfg.crawler.agent_usage = v.get<bool>();
        else if (key == "task-collection") cfg.crawler.task_collection = v.get<bool>();
        else if (key == "significant-change-threshold") cfg.crawler.significant_change_threshold = v.get<int>();
        else if (key == "rng-seed") cfg.crawler.rng_seed = v.get<std::uint64_t>();
        else if (key == "handlers") cfg.handlers = v.get<std::string>();
        else if (key == "change-rule") cfg.crawler.change_rule =
            v.get<std::string>() == "either" ? ChangeRule::EitherAlone : ChangeRule::JointCount;
        else if (key == "out") cfg.out_dir = v.get<std::string>();
        else if (key == "parallel-workers") cfg.parallel_workers = v.get<int>();
        else if (key == "llm-endpoint") cfg.llm.endpoint_url = v.get<std::string>();
        else if (key == "llm-model") cfg.llm.model_name = v.get<std::string>();
        else if (key == "llm-key-env") cfg.llm.api_key_env_var = v.get<std::string>();
        else throw std::invalid_argument("config file: unknown key '" + key + "'");
    }
}

void add_crawler_flags(CLI::App* cmd, RunConfig& cfg) {
    cmd->add_option("--max-duration-minutes", cfg.crawler.max_duration_minutes,
                    "Maximum parsing duration in minutes")
        ->capture_default_str();
    cmd->add_option("--default-text", cfg.crawler.default_text,
                    "Deterministic text input string")
        ->capture_default_str();
    cmd->add_option("--max-depth", cfg.crawler.max_depth, "Maximum parsing tree depth")
        ->capture_default_str();
    cmd->add_flag("--cursor-move-before-click", cfg.crawler.cursor_move_before_click,
                  "Move the cursor to the target before clicking (default false)");
    cmd->add_flag("--agent-usage,!--no-agents", cfg.crawler.agent_usage,
                  "Use LLM agents when an endpoint is configured (default true)");
    cmd->add_flag("--task-collection,!--no-task-collection", cfg.crawler.task_collection,
                  "Collect tasks alongside graphs (default true)");
    cmd->add_option("--significant-change-threshold", cfg.crawler.significant_change_threshold,
                    "Added+removed elements beyond which a change is significant")
        ->capture_default_str();
    cmd->add_option("--rng-seed", cfg.crawler.rng_seed, "Seed for randomized exploration order")
        ->capture_default_str();
    cmd->add_option("--handlers", cfg.handlers, "Interaction handlers: on|off")
        ->capture_default_str()
        ->check(CLI::IsMember({"on", "off"}));
    cmd->add_option("--change-rule", [&cfg](const std::vector<std::string>& vals) {
            cfg.crawler.change_rule =
                vals.at(0) == "either" ? ChangeRule::EitherAlone : ChangeRule::JointCount;
            return true;
        }, "Count added+removed jointly or either alone: joint|either")
        ->check(CLI::IsMember({"joint", "either"}));
    cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    cmd->add_option("--parallel-workers", cfg.parallel_workers, "Apps crawled in parallel")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    cmd->add_option("--llm-endpoint", cfg.llm.endpoint_url,
                    "Chat-completions endpoint URL (absent = deterministic agents)");
    cmd->add_option("--llm-model", cfg.llm.model_name, "Model name for the endpoint");
    cmd->add_option("--llm-key-env", cfg.llm.api_key_env_var,
                    "Environment variable holding the API key");
}

AgentSuite make_agents(const RunConfig& cfg) {
    AgentSuite suite = deterministic_agents(cfg.crawler.default_text);
    suite.config = cfg.llm;
    if (!cfg.llm.endpoint_url.empty())
        suite.client = std::make_shared<HttpChatClient>(cfg.llm);
    return suite;
}

std::vector<fs::path> expand_spec_paths(const std::vector<std::string>& inputs) {
    std::vector<fs::path> paths;
    for (const auto& in : inputs) {
        fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> found;
            for (const auto& entry : fs::directory_iterator(p)) {
                const std::string name = entry.path().filename().string();
                if (name.size() > 9 && name.substr(name.size() - 9) == ".app.json")
                    found.push_back(entry.path());
            }
            std::sort(found.begin(), found.end());
            paths.insert(paths.end(), found.begin(), found.end());
        } else {
            paths.push_back(p);
        }
    }
    return paths;
}

int cmd_crawl(const std::vector<std::string>& inputs, const RunConfig& cfg) {
    auto paths = expand_spec_paths(inputs);
    if (paths.empty()) {
        std::cerr << "no app specs found\n";
        return kExitEmptyInputs;
    }
    CrawlerConfig crawler_cfg = cfg.crawler;
    crawler_cfg.handlers_enabled = cfg.handlers == "on";

    // Parse everything up front so spec errors fail fast.
    struct Job {
        fs::path path;
        AppSpec spec;
    };
    std::vector<Job> jobs;
    for (const auto& p : paths) {
        try {
            jobs.push_back({p, load_app_spec(read_file(p))});
        } catch (const std::exception& e) {
            std::cerr << p.string() << ": " << e.what() << "\n";
            return kExitSpecError;
        }
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> backend_failed{false};
    std::mutex log_mutex;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            const AgentSuite agents = make_agents(cfg);
            CrawlResult result = crawl(sim_session_factory(job.spec), crawler_cfg, agents);
            result.graph.app_name = job.spec.app_name;
            result.graph.genre = job.spec.genre;

            const fs::path out(cfg.out_dir);
            write_file(out / (job.spec.app_name + ".graph.json"), serialize(result.graph));
            write_file(out / (job.spec.app_name + ".graph.svg"), export_svg(result.graph));
            write_file(out / (job.spec.app_name + ".report.json"),
                       report_to_json(result.report).dump(2) + "\n");
            const fs::path images = out / "images" / job.spec.app_name;
            for (const auto& [id, node] : result.graph.nodes)
                write_file(images / node.state.image_name, render_ppm(node.state));

            std::lock_guard<std::mutex> lock(log_mutex);
            std::cout << job.spec.app_name << ": " << result.graph.nodes.size() << " nodes, "
                      << result.graph.edges.size() << " edges, "
                      << to_string(result.report.halted_reason);
            if (result.report.backend_error) {
                std::cout << " (backend failure: " << *result.report.backend_error << ")";
                backend_failed = true;
            }
            std::cout << "\n";
        }
    };

    const int n_workers = std::max(1, std::min<int>(cfg.parallel_workers, jobs.size()));
    std::vector<std::thread> threads;
    for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    return backend_failed ? kExitBackendFailure : 0;
}

int cmd_tasks(const std::vector<std::string>& graph_files, const RunConfig& cfg) {
    if (graph_files.empty()) {
        std::cerr << "no graph files given\n";
        return kExitEmptyInputs;
    }
    std::vector<TaskRecord> all;
    for (const auto& gf : graph_files) {
        const fs::path gpath(gf);
        InteractionGraph g = deserialize(read_file(gpath));
        fs::path rpath = gpath;
        rpath.replace_extension();  // strip .json
        rpath.replace_extension();  // strip .graph
        rpath += ".report.json";
        CrawlReport report;
        if (fs::exists(rpath)) report = report_from_json(ordered_json::parse(read_file(rpath)));

        const AgentSuite agents = make_agents(cfg);
        auto records = synthesize(g, agents, report);

        // Render the screens each record references (including transient
        // pre-action states) plus the element crop.
        const fs::path images = fs::path(cfg.out_dir) / "images" / g.app_name;
        for (const auto& r : records) {
            ScreenState state;
            state.tree = r.a11y_path;
            state.image_name = r.image_ref;
            state.scaling_factor = r.scaling_factor;
            const fs::path main_image = images / r.image_ref;
            if (!fs::exists(main_image)) write_file(main_image, render_ppm(state));
            const Image full = render(state);
            write_file(images / r.cropped_image_ref,
                       encode_ppm(crop(full, state, r.element_data.bbox)));
        }
        all.insert(all.end(), records.begin(), records.end());
    }
    const fs::path out = fs::path(cfg.out_dir) / "tasks.jsonl";
    write_dataset(all, out.string());
    std::cout << out.string() << ": " << all.size() << " records\n";
    return 0;
}

int cmd_split(const std::string& tasks_file, double fraction, const RunConfig& cfg) {
    auto records = read_dataset(tasks_file);
    if (records.empty()) {
        std::cerr << "empty dataset\n";
        return kExitEmptyInputs;
    }
    const SplitResult result = split(records, fraction);
    const fs::path out(cfg.out_dir);
    write_file(out / "split.json", manifest_to_json(result.manifest).dump(2) + "\n");
    write_dataset(result.train, (out / "train.jsonl").string());
    write_dataset(result.test, (out / "test.jsonl").string());
    std::cout << "train: " << result.manifest.train_count << " records / "
              << result.manifest.train_apps.size() << " apps; test: "
              << result.manifest.test_count << " records / " << result.manifest.test_apps.size()
              << " apps\n";
    return 0;
}

int cmd_eval(const std::string& tasks_file, const std::string& predictor_kind, int runs,
             std::uint64_t seed, const std::string& images_dir, const RunConfig& cfg) {
    auto records = read_dataset(tasks_file);
    if (records.empty()) {
        std::cerr << "empty dataset\n";
        return kExitEmptyInputs;
    }
    Predictor predictor;
    if (predictor_kind == "oracle") predictor = oracle_predictor();
    else if (predictor_kind == "never") predictor = never_parse_predictor();
    else if (predictor_kind.rfind("random", 0) == 0) predictor = random_predictor(seed);
    else if (predictor_kind.rfind("fixed:", 0) == 0) {
        const std::string payload = predictor_kind.substr(6);
        const auto comma = payload.find(',');
        if (comma == std::string::npos) {
            std::cerr << "fixed predictor wants fixed:x,y\n";
            return kExitConfigError;
        }
        predictor = fixed_point_predictor(std::stod(payload.substr(0, comma)),
                                          std::stod(payload.substr(comma + 1)));
    } else if (predictor_kind.rfind("cmd:", 0) == 0) {
        predictor = command_predictor(predictor_kind.substr(4), images_dir);
    } else {
        std::cerr << "unknown predictor '" << predictor_kind << "'\n";
        return kExitConfigError;
    }

    const EvalReport report = evaluate(records, predictor, runs);
    const fs::path out(cfg.out_dir);
    write_file(out / "eval_report.md", format_report(report, ReportStyle::Markdown));
    write_file(out / "eval_report.csv", format_report(report, ReportStyle::Csv));
    write_file(out / "eval_report.json", eval_report_to_json(report).dump(2) + "\n");
    std::cout << format_report(report, ReportStyle::Markdown);
    return 0;
}

int cmd_stats(const std::vector<std::string>& inputs) {
    if (inputs.empty()) {
        std::cerr << "no inputs\n";
        return kExitEmptyInputs;
    }
    const bool tasks_mode = inputs.size() == 1 && inputs[0].find(".jsonl") != std::string::npos;
    ordered_json summary;
    if (tasks_mode) {
        auto records = read_dataset(inputs[0]);
        if (records.empty()) {
            std::cerr << "empty dataset\n";
            return kExitEmptyInputs;
        }
        std::map<std::string, int> per_category, per_element, per_app;
        for (const auto& r : records) {
            per_category[r.task_category] += 1;
            per_element[r.element_category] += 1;
            per_app[r.app_name] += 1;
        }
        summary["records"] = records.size();
        summary["per_task_category"] = per_category;
        summary["per_element_category"] = per_element;
        summary["per_app"] = per_app;
    } else {
        double depth_sum = 0;
        int n = 0;
        std::map<std::string, int> per_genre_graphs, per_genre_nodes;
        for (const auto& in : inputs) {
            InteractionGraph g = deserialize(read_file(in));
            depth_sum += depth(g);
            ++n;
            per_genre_graphs[g.genre.empty() ? "unknown" : g.genre] += 1;
            per_genre_nodes[g.genre.empty() ? "unknown" : g.genre] +=
                static_cast<int>(g.nodes.size());
        }
        summary["graphs"] = n;
        summary["avg_depth"] = depth_sum / n;
        summary["per_genre_graphs"] = per_genre_graphs;
        summary["per_genre_nodes"] = per_genre_nodes;
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_viz(const std::string& graph_file, const RunConfig& cfg) {
    InteractionGraph g = deserialize(read_file(graph_file));
    const fs::path out(cfg.out_dir);
    write_file(out / (g.app_name + ".graph.svg"), export_svg(g));
    write_file(out / (g.app_name + ".graph.dot"), export_dot(g));
    std::cout << (out / (g.app_name + ".graph.svg")).string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"axcrawl: accessibility-driven app crawler, task synthesizer, and "
                 "grounding evaluation harness"};
    app.require_subcommand(1);

    RunConfig cfg;

    // Config file applies before flag parsing so flags override it.
    std::string config_path;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--config") config_path = argv[i + 1];
    if (!config_path.empty()) {
        try {
            apply_config_file(config_path, cfg);
        } catch (const std::exception& e) {
            std::cerr << e.what() << "\n";
            return kExitConfigError;
        }
    }
    app.add_option("--config", config_path, "JSON config file (flags override it)");

    std::vector<std::string> crawl_inputs;
    auto* crawl_cmd = app.add_subcommand("crawl", "Crawl app specs into interaction graphs");
    crawl_cmd->add_option("specs", crawl_inputs, "App spec files or directories")->required();
    add_crawler_flags(crawl_cmd, cfg);

    std::vector<std::string> graph_inputs;
    auto* tasks_cmd = app.add_subcommand("tasks", "Synthesize grounded tasks from graphs");
    tasks_cmd->add_option("graphs", graph_inputs, "Graph JSON files")->required();
    tasks_cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();
    tasks_cmd->add_option("--default-text", cfg.crawler.default_text, "Deterministic text input")
        ->capture_default_str();
    tasks_cmd->add_option("--llm-endpoint", cfg.llm.endpoint_url, "Chat-completions endpoint URL");
    tasks_cmd->add_option("--llm-model", cfg.llm.model_name, "Model name");
    tasks_cmd->add_option("--llm-key-env", cfg.llm.api_key_env_var, "API key env var");

    std::string tasks_file;
    double fraction = 0.2;
    auto* split_cmd = app.add_subcommand("split", "Split a dataset into train/test by app");
    split_cmd->add_option("tasks", tasks_file, "tasks.jsonl file")->required();
    split_cmd->add_option("--fraction-test-apps", fraction, "Fraction of apps held out for test")
        ->capture_default_str();
    split_cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();

    std::string eval_tasks, predictor = "oracle", images_dir = "out/images";
    int runs = 1;
    std::uint64_t eval_seed = 1;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a grounding predictor on a dataset");
    eval_cmd->add_option("tasks", eval_tasks, "tasks.jsonl file")->required();
    eval_cmd->add_option("--predictor", predictor,
                         "oracle | never | random | fixed:x,y | cmd:<command>")
        ->capture_default_str();
    eval_cmd->add_option("--runs", runs, "Independent runs (mean and stddev reported)")
        ->capture_default_str();
    eval_cmd->add_option("--seed", eval_seed, "Seed for the random predictor")
        ->capture_default_str();
    eval_cmd->add_option("--images-dir", images_dir, "Images directory for cmd predictors")
        ->capture_default_str();
    eval_cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();

    std::vector<std::string> stats_inputs;
    auto* stats_cmd = app.add_subcommand("stats", "Summarize graphs or a task dataset");
    stats_cmd->add_option("inputs", stats_inputs, "Graph files or one tasks.jsonl")->required();

    std::string viz_input;
    auto* viz_cmd = app.add_subcommand("viz", "Export a graph as SVG and DOT");
    viz_cmd->add_option("graph", viz_input, "Graph JSON file")->required();
    viz_cmd->add_option("--out", cfg.out_dir, "Output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (crawl_cmd->parsed()) return cmd_crawl(crawl_inputs, cfg);
        if (tasks_cmd->parsed()) return cmd_tasks(graph_inputs, cfg);
        if (split_cmd->parsed()) return cmd_split(tasks_file, fraction, cfg);
        if (eval_cmd->parsed()) return cmd_eval(eval_tasks, predictor, runs, eval_seed, images_dir, cfg);
        if (stats_cmd->parsed()) return cmd_stats(stats_inputs);
        if (viz_cmd->parsed()) return cmd_viz(viz_input, cfg);
    } catch (const SchemaError& e) {
        std::cerr << e.what() << "\n";
        return kExitSpecError;
    } catch (const DanglingReference& e) {
        std::cerr << e.what() << "\n";
        return kExitSpecError;
    } catch (const ParseError& e) {
        std::cerr << e.what() << "\n";
        return kExitSpecError;
    } catch (const DegenerateSplit& e) {
        std::cerr << e.what() << "\n";
        return kExitEmptyInputs;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << e.what() << "\n";
        return kExitBackendFailure;
    }
    return 0;
}
