#include <catch_amalgamated.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "axcrawl/graph.hpp"
#include "axcrawl/tasks.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace axcrawl;
namespace tu = test_util;

namespace {

struct RunResult {
    int exit_code = 0;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(AXCRAWL_CLI_PATH) + " " + args + " 2>&1";
    std::string output;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (std::size_t n = fread(buf, 1, sizeof(buf), pipe)) output.append(buf, n);
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), output};
}

fs::path scratch_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("axcrawl_cli_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("help lists the crawler parameters with their defaults", "[cli]") {
    const RunResult r = run_cli("crawl --help");
    REQUIRE(r.exit_code == 0);
    REQUIRE(r.output.find("--max-duration-minutes") != std::string::npos);
    REQUIRE(r.output.find("120") != std::string::npos);
    REQUIRE(r.output.find("--default-text") != std::string::npos);
    REQUIRE(r.output.find("DEFAULT") != std::string::npos);
    REQUIRE(r.output.find("--max-depth") != std::string::npos);
    REQUIRE(r.output.find("25") != std::string::npos);
    REQUIRE(r.output.find("--cursor-move-before-click") != std::string::npos);
    REQUIRE(r.output.find("--agent-usage") != std::string::npos);
    REQUIRE(r.output.find("--task-collection") != std::string::npos);
    REQUIRE(r.output.find("--significant-change-threshold") != std::string::npos);
}

TEST_CASE("crawl writes graph, svg, report, and images per app", "[cli]") {
    const fs::path out = scratch_dir("crawl");
    const RunResult r = run_cli("crawl " + tu::fixture_path("threesteps.app.json") + " --out " +
                                out.string());
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(out / "threesteps.graph.json"));
    REQUIRE(fs::exists(out / "threesteps.graph.svg"));
    REQUIRE(fs::exists(out / "threesteps.report.json"));
    REQUIRE(fs::exists(out / "images" / "threesteps" / "screen_000000.ppm"));

    const InteractionGraph g = deserialize(tu::read_file((out / "threesteps.graph.json").string()));
    REQUIRE(g.nodes.size() == 3);
    fs::remove_all(out);
}

TEST_CASE("crawl respects the depth flag", "[cli]") {
    const fs::path out = scratch_dir("depth");
    const RunResult r = run_cli("crawl " + tu::fixture_path("threesteps.app.json") +
                                " --max-depth 1 --out " + out.string());
    REQUIRE(r.exit_code == 0);
    const InteractionGraph g = deserialize(tu::read_file((out / "threesteps.graph.json").string()));
    REQUIRE(depth(g) <= 1);
    fs::remove_all(out);
}

TEST_CASE("repeat crawls are byte-identical", "[cli]") {
    const fs::path out1 = scratch_dir("det1");
    const fs::path out2 = scratch_dir("det2");
    REQUIRE(run_cli("crawl " + tu::fixture_path("tickerdesk.app.json") + " --no-agents --out " +
                    out1.string())
                .exit_code == 0);
    REQUIRE(run_cli("crawl " + tu::fixture_path("tickerdesk.app.json") + " --no-agents --out " +
                    out2.string())
                .exit_code == 0);
    REQUIRE(tu::read_file((out1 / "tickerdesk.graph.json").string()) ==
            tu::read_file((out2 / "tickerdesk.graph.json").string()));
    fs::remove_all(out1);
    fs::remove_all(out2);
}

TEST_CASE("handlers off zeroes the handler counters", "[cli]") {
    const fs::path out = scratch_dir("handlers");
    REQUIRE(run_cli("crawl " + tu::fixture_path("skycast.app.json") + " --handlers off --out " +
                    out.string())
                .exit_code == 0);
    const auto report = ordered_json::parse(tu::read_file((out / "skycast.report.json").string()));
    for (const auto& [name, count] : report["handler_counters"].items())
        REQUIRE(count.get<int>() == 0);
    fs::remove_all(out);
}

TEST_CASE("tasks, split, eval, stats, and viz chain together", "[cli]") {
    const fs::path out = scratch_dir("pipeline");
    REQUIRE(run_cli("crawl " + tu::fixture_path("tickerdesk.app.json") + " " +
                    tu::fixture_path("skycast.app.json") + " --out " + out.string())
                .exit_code == 0);
    REQUIRE(run_cli("tasks " + (out / "tickerdesk.graph.json").string() + " " +
                    (out / "skycast.graph.json").string() + " --out " + out.string())
                .exit_code == 0);
    REQUIRE(fs::exists(out / "tasks.jsonl"));

    // Crops exist for the records.
    const auto records = read_dataset((out / "tasks.jsonl").string());
    REQUIRE_FALSE(records.empty());
    REQUIRE(fs::exists(out / "images" / records[0].app_name / records[0].cropped_image_ref));

    const RunResult split_run =
        run_cli("split " + (out / "tasks.jsonl").string() + " --fraction-test-apps 0.5 --out " +
                out.string());
    REQUIRE(split_run.exit_code == 0);
    const auto manifest = ordered_json::parse(tu::read_file((out / "split.json").string()));
    for (const auto& app : manifest["test_apps"])
        for (const auto& other : manifest["train_apps"]) REQUIRE(app != other);

    const RunResult eval_run = run_cli("eval " + (out / "tasks.jsonl").string() +
                                       " --predictor oracle --out " + out.string());
    REQUIRE(eval_run.exit_code == 0);
    REQUIRE(eval_run.output.find("100.00%") != std::string::npos);

    const RunResult stats_run = run_cli("stats " + (out / "tickerdesk.graph.json").string() + " " +
                                        (out / "skycast.graph.json").string());
    REQUIRE(stats_run.exit_code == 0);
    REQUIRE(stats_run.output.find("avg_depth") != std::string::npos);
    REQUIRE(stats_run.output.find("Finance") != std::string::npos);

    const RunResult viz_run =
        run_cli("viz " + (out / "tickerdesk.graph.json").string() + " --out " + out.string());
    REQUIRE(viz_run.exit_code == 0);
    REQUIRE(fs::exists(out / "tickerdesk.graph.dot"));
    fs::remove_all(out);
}

TEST_CASE("stats over a single fixture graph reports its depth", "[cli]") {
    const fs::path out = scratch_dir("stats1");
    REQUIRE(run_cli("crawl " + tu::fixture_path("threesteps.app.json") + " --out " + out.string())
                .exit_code == 0);
    const RunResult r = run_cli("stats " + (out / "threesteps.graph.json").string());
    REQUIRE(r.exit_code == 0);
    const auto summary = ordered_json::parse(r.output);
    REQUIRE(summary["avg_depth"].get<double>() == 2.0);
    fs::remove_all(out);
}

TEST_CASE("exit codes distinguish config, spec, and empty-input errors", "[cli]") {
    const fs::path out = scratch_dir("errors");

    // Unknown config key -> config error (2).
    const fs::path bad_config = out / "bad.json";
    std::ofstream(bad_config) << R"({"no-such-key": true})";
    REQUIRE(run_cli("--config " + bad_config.string() + " crawl " +
                    tu::fixture_path("inertpad.app.json"))
                .exit_code == 2);

    // Broken app spec -> spec error (3).
    const fs::path bad_spec = out / "bad.app.json";
    std::ofstream(bad_spec) << R"({"app_name": "x"})";
    REQUIRE(run_cli("crawl " + bad_spec.string()).exit_code == 3);

    // Empty dataset -> empty-input error (4).
    const fs::path empty = out / "empty.jsonl";
    std::ofstream(empty) << "";
    REQUIRE(run_cli("eval " + empty.string() + " --predictor oracle").exit_code == 4);
    REQUIRE(run_cli("split " + empty.string()).exit_code == 4);

    fs::remove_all(out);
}

TEST_CASE("config file values apply beneath flags", "[cli]") {
    const fs::path out = scratch_dir("config");
    const fs::path config = out / "run.json";
    std::ofstream(config) << R"({"max-depth": 1, "out": ")" << (out / "from_config").string()
                          << R"("})";
    REQUIRE(run_cli("--config " + config.string() + " crawl " +
                    tu::fixture_path("threesteps.app.json"))
                .exit_code == 0);
    const InteractionGraph g =
        deserialize(tu::read_file((out / "from_config" / "threesteps.graph.json").string()));
    REQUIRE(depth(g) <= 1);

    // Flag overrides the file.
    REQUIRE(run_cli("--config " + config.string() + " crawl " +
                    tu::fixture_path("threesteps.app.json") + " --max-depth 25 --out " +
                    (out / "flagged").string())
                .exit_code == 0);
    const InteractionGraph g2 =
        deserialize(tu::read_file((out / "flagged" / "threesteps.graph.json").string()));
    REQUIRE(depth(g2) == 2);
    fs::remove_all(out);
}
