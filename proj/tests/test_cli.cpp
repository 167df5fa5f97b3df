#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "crashrisk/masked_table.hpp"
#include "crashrisk/synth.hpp"

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace crashrisk;

namespace {

const std::string kCli = CRASHRISK_CLI_PATH;

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr, interleaved
};

// Shells the binary with output captured to a file; std::system's return
// value carries the exit status on POSIX.
RunResult run_cli(const std::string& args, const std::filesystem::path& workdir) {
    const std::filesystem::path log = workdir / "cli_output.log";
    const std::string command = "cd '" + workdir.string() + "' && '" + kCli + "' " + args +
                                " > '" + log.string() + "' 2>&1";
    const int status = std::system(command.c_str());
    RunResult result;
#ifdef _WIN32
    result.exit_code = status;
#else
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
#endif
    std::ifstream in(log);
    std::ostringstream text;
    text << in.rdbuf();
    result.output = text.str();
    return result;
}

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name)
        : path(std::filesystem::temp_directory_path() / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
};

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << text;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

}  // namespace

TEST_CASE("help and version exit cleanly") {
    const TempDir dir("crashrisk_cli_help");
    CHECK(run_cli("--help", dir.path).exit_code == 0);
    const RunResult version = run_cli("--version", dir.path);
    CHECK(version.exit_code == 0);
    CHECK(version.output.find("0.1.0") != std::string::npos);
    CHECK(run_cli("gen-data --help", dir.path).exit_code == 0);
}

TEST_CASE("usage mistakes exit with the config-error code") {
    const TempDir dir("crashrisk_cli_usage");
    CHECK(run_cli("", dir.path).exit_code == 2);          // subcommand required
    CHECK(run_cli("frobnicate", dir.path).exit_code == 2);
    CHECK(run_cli("validate --format xml", dir.path).exit_code == 2);
    CHECK(run_cli("validate --config does_not_exist.json", dir.path).exit_code == 2);
    CHECK(run_cli("train", dir.path).exit_code == 2);     // --config required
    write_file(dir.path / "bad.json", R"({"experiment":"validation","bogus":true})");
    CHECK(run_cli("validate --config bad.json", dir.path).exit_code == 2);
    write_file(dir.path / "wrong.json", R"({"experiment":"imbalance_sweep"})");
    const RunResult mismatch = run_cli("validate --config wrong.json", dir.path);
    CHECK(mismatch.exit_code == 2);
    CHECK(mismatch.output.find("imbalance_sweep") != std::string::npos);
}

TEST_CASE("gen-data, train, and score chain together") {
    const TempDir dir("crashrisk_cli_chain");
    write_file(dir.path / "gen.json",
               R"({"n_crash":20,"n_noncrash":60,"d":6,"latent_rank":2,
                   "noise_std":0.3,"rng_seed":5})");
    const RunResult gen = run_cli("gen-data --config gen.json --out data", dir.path);
    REQUIRE(gen.exit_code == 0);
    REQUIRE(std::filesystem::exists(dir.path / "data" / "data.csv"));

    const nlohmann::json manifest =
        nlohmann::json::parse(read_file(dir.path / "data" / "manifest.json"));
    CHECK(manifest.at("command") == "gen-data");
    CHECK(manifest.at("config").at("n_crash") == 20);
    CHECK(manifest.at("seed") == 5);

    // The CSV must load back as 80 rows with labels.
    const CsvData loaded = load_csv_file((dir.path / "data" / "data.csv").string());
    CHECK(loaded.table.rows() == 80);
    CHECK(loaded.table.cols() == 6);
    REQUIRE(loaded.labels.has_value());

    write_file(dir.path / "train.json",
               R"({"csv":"data/data.csv",
                   "pipeline":{"imputer":{"kind":"ppca","latent_dim":2},
                               "imbalance":{"gamma":5,"mode":"cost"},
                               "classifier":"svm_linear"}})");
    REQUIRE(run_cli("train --config train.json --seed 11 --out model", dir.path).exit_code ==
            0);
    REQUIRE(std::filesystem::exists(dir.path / "model" / "model.json"));

    write_file(dir.path / "score.json",
               R"({"csv":"data/data.csv","model":"model/model.json"})");
    REQUIRE(run_cli("score --config score.json --out scored", dir.path).exit_code == 0);
    const std::string scores = read_file(dir.path / "scored" / "scores.csv");
    CHECK(scores.rfind("row,score,prediction\n", 0) == 0);
    CHECK(std::count(scores.begin(), scores.end(), '\n') == 81);  // header + 80 rows

    // Metrics land beside the scores because the CSV had labels; a separating
    // direction exists, so training-set AUC must beat chance comfortably.
    const std::string metrics = read_file(dir.path / "scored" / "metrics.csv");
    const std::size_t header_end = metrics.find('\n');
    std::istringstream row(metrics.substr(header_end + 1));
    std::string accuracy, auc;
    std::getline(row, accuracy, ',');
    std::getline(row, auc, ',');
    CHECK(std::stod(auc) > 0.7);

    // JSON metrics variant.
    REQUIRE(run_cli("score --config score.json --out scored_json --format json", dir.path)
                .exit_code == 0);
    const nlohmann::json mj =
        nlohmann::json::parse(read_file(dir.path / "scored_json" / "metrics.json"));
    CHECK(mj.at("auc").get<double>() == doctest::Approx(std::stod(auc)));
}

TEST_CASE("impute fills every hole in a csv") {
    const TempDir dir("crashrisk_cli_impute");
    // A 6x3 table with two missing cells.
    write_file(dir.path / "holey.csv",
               "a,b,c\n1,2,3\n2,,4\n3,4,\n4,5,6\n5,6,7\n6,7,8\n");
    write_file(dir.path / "impute.json",
               R"({"csv":"holey.csv","imputer":{"kind":"mean"}})");
    REQUIRE(run_cli("impute --config impute.json --out filled", dir.path).exit_code == 0);

    const CsvData completed = load_csv_file((dir.path / "filled" / "completed.csv").string());
    CHECK(completed.table.rows() == 6);
    CHECK(completed.table.missing_count() == 0);
    // Mean of column b's observed cells (2,4,5,6,7) = 4.8.
    CHECK(completed.table.value(1, 1) == doctest::Approx(4.8));

    const nlohmann::json model =
        nlohmann::json::parse(read_file(dir.path / "filled" / "imputer_model.json"));
    CHECK(model.at("algo") == "mean");
}

TEST_CASE("single-class training data is a numerical failure") {
    const TempDir dir("crashrisk_cli_fail");
    write_file(dir.path / "oneclass.csv", "a,b,label\n1,2,1\n2,3,1\n3,4,1\n4,5,1\n");
    write_file(dir.path / "train.json", R"({"csv":"oneclass.csv"})");
    const RunResult result = run_cli("train --config train.json --out out", dir.path);
    CHECK(result.exit_code == 3);
    CHECK(result.output.find("numerical failure") != std::string::npos);
}

TEST_CASE("an experiment subcommand re-run with one seed is byte-identical") {
    const TempDir dir("crashrisk_cli_repro");
    write_file(dir.path / "sweep.json",
               R"({"dataset":{"synthetic":{"n_crash":12,"n_noncrash":12,"d":6,
                                            "latent_rank":2,"noise_std":0.2,"rng_seed":3}},
                   "ratios":[0,0.2],"repeats":1,"latent_dim":2,"imputer_max_iter":100})");
    REQUIRE(run_cli("ratio-sweep --config sweep.json --seed 8 --out a", dir.path).exit_code ==
            0);
    REQUIRE(run_cli("ratio-sweep --config sweep.json --seed 8 --out b", dir.path).exit_code ==
            0);
    CHECK(read_file(dir.path / "a" / "imputer_ratio_sweep.csv") ==
          read_file(dir.path / "b" / "imputer_ratio_sweep.csv"));
    CHECK(read_file(dir.path / "a" / "imputer_ratio_sweep_summary.csv") ==
          read_file(dir.path / "b" / "imputer_ratio_sweep_summary.csv"));

    // The manifest echoes the full resolved spec, out_dir included, so compare
    // it after erasing the only field that legitimately differs.
    nlohmann::json ma = nlohmann::json::parse(read_file(dir.path / "a" / "manifest.json"));
    nlohmann::json mb = nlohmann::json::parse(read_file(dir.path / "b" / "manifest.json"));
    ma.at("spec").erase("out_dir");
    mb.at("spec").erase("out_dir");
    CHECK(ma == mb);

    // A different seed must actually change the report.
    REQUIRE(run_cli("ratio-sweep --config sweep.json --seed 9 --out c", dir.path).exit_code ==
            0);
    CHECK(read_file(dir.path / "a" / "imputer_ratio_sweep.csv") !=
          read_file(dir.path / "c" / "imputer_ratio_sweep.csv"));
}

TEST_CASE("validate runs end to end from a bare subcommand") {
    const TempDir dir("crashrisk_cli_validate");
    write_file(dir.path / "val.json",
               R"({"dataset":{"synthetic":{"n_crash":15,"n_noncrash":45,"d":6,
                                            "latent_rank":2,"noise_std":0.3,"rng_seed":13}},
                   "classifiers":["svm_linear"],"latent_dim":2})");
    const RunResult result =
        run_cli("validate --config val.json --seed 2 --out val", dir.path);
    REQUIRE(result.exit_code == 0);
    const std::string report = read_file(dir.path / "val" / "validation.csv");
    CHECK(report.find("svm_linear") != std::string::npos);
    CHECK(std::count(report.begin(), report.end(), '\n') == 2);  // header + one row

    // --scaling train switches the standardization mode and still succeeds.
    CHECK(run_cli("validate --config val.json --seed 2 --scaling train --out val2", dir.path)
              .exit_code == 0);
    const nlohmann::json manifest =
        nlohmann::json::parse(read_file(dir.path / "val2" / "manifest.json"));
    CHECK(manifest.at("spec").at("scaling") == "train");
}
