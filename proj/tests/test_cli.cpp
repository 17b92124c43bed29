// End-to-end checks of the command-line tool. The binary path arrives as
// --cli=<path> ahead of the doctest arguments.

#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cdnas/data.hpp"
#include "cdnas/genome.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g_cli;
fs::path g_work;

struct RunOutput {
    int exit_code = -1;
    std::string out;
};

RunOutput run_cli(const std::string& args) {
    fs::path out_file = g_work / "last_stdout.txt";
    std::string cmd = g_cli + " " + args + " >" + out_file.string() + " 2>&1";
    int status = std::system(cmd.c_str());
    RunOutput r;
    r.exit_code = WEXITSTATUS(status);
    std::ifstream f(out_file);
    std::stringstream ss;
    ss << f.rdbuf();
    r.out = ss.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream f(p);
    f << content;
}

// 200 students / 100 exercises / 8 concepts on disk for validate-data.
void write_standard_synthetic(const fs::path& logs, const fs::path& q) {
    cdnas::RawData raw = cdnas::make_synthetic({});
    cdnas::write_logs_csv(raw, logs.string());
    cdnas::write_q_csv(raw, q.string());
}

}  // namespace

TEST_CASE("validate-data") {
    fs::path logs = g_work / "v_logs.csv", q = g_work / "v_q.csv";
    write_standard_synthetic(logs, q);

    SUBCASE("valid files") {
        RunOutput r = run_cli("validate-data --logs " + logs.string() + " --q " + q.string());
        CHECK(r.exit_code == 0);
        CHECK(r.out.find("N=200 M=100 K=8") != std::string::npos);
    }

    SUBCASE("bad score exits 1 naming the row") {
        fs::path bad = g_work / "v_bad.csv";
        std::ostringstream os;
        os << "student_id,exercise_id,score\n";
        for (int i = 0; i < 16; ++i) os << "s0,e" << i << "," << (i % 2) << "\n";
        os << "s0,e5,2\n";
        write_file(bad, os.str());
        RunOutput r = run_cli("validate-data --logs " + bad.string() + " --q " + q.string());
        CHECK(r.exit_code == 1);
        CHECK(r.out.find(":18:") != std::string::npos);
    }

    SUBCASE("missing Q file exits 1") {
        RunOutput r = run_cli("validate-data --logs " + logs.string() + " --q " +
                              (g_work / "absent.csv").string());
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("search runs, reproduces and resumes") {
    json config = {
        {"population", 16},
        {"generations", 2},
        {"node_range", {2, 4}},
        {"training", {{"epochs", 2}, {"batch_size", 64}}},
        {"seed", 5},
        {"threads", 2},
        {"dataset",
         {{"type", "synthetic"},
          {"students", 60},
          {"exercises", 40},
          {"concepts", 4},
          {"logs_per_student", 24},
          {"seed", 11}}},
    };
    fs::path cfg_path = g_work / "search_config.json";
    write_file(cfg_path, config.dump(2));

    fs::path run_a = g_work / "run_a";
    RunOutput r = run_cli("--out " + run_a.string() + " search --config " + cfg_path.string());
    REQUIRE(r.exit_code == 0);

    SUBCASE("run directory layout") {
        CHECK(fs::exists(run_a / "config.json"));
        CHECK(fs::exists(run_a / "manifest.json"));
        CHECK(fs::exists(run_a / "history.csv"));
        CHECK(fs::exists(run_a / "archive.jsonl"));
        CHECK(fs::exists(run_a / "split.json"));
        REQUIRE(fs::exists(run_a / "front"));

        // init + 2 generations
        std::string history = slurp(run_a / "history.csv");
        int data_rows = -1;  // discount the header
        for (char ch : history) data_rows += ch == '\n';
        CHECK(data_rows == 3);

        json manifest = json::parse(slurp(run_a / "manifest.json"));
        CHECK(manifest["status"] == "complete");
        CHECK(manifest["dataset_fingerprint"].is_string());
    }

    SUBCASE("rerun with the same seed is byte-identical on the front") {
        fs::path run_b = g_work / "run_b";
        RunOutput r2 =
            run_cli("--out " + run_b.string() + " search --config " + cfg_path.string());
        REQUIRE(r2.exit_code == 0);
        std::vector<fs::path> files_a;
        for (const auto& e : fs::directory_iterator(run_a / "front"))
            files_a.push_back(e.path().filename());
        REQUIRE_FALSE(files_a.empty());
        for (const auto& name : files_a)
            CHECK(slurp(run_a / "front" / name) == slurp(run_b / "front" / name));
    }

    SUBCASE("--resume on a finished run is a no-op exit 0") {
        RunOutput r2 = run_cli("--out " + run_a.string() + " search --resume --config " +
                               cfg_path.string());
        CHECK(r2.exit_code == 0);
        CHECK(r2.out.find("already complete") != std::string::npos);
    }

    SUBCASE("clobbering a finished run without --resume is a run-state error") {
        RunOutput r2 =
            run_cli("--out " + run_a.string() + " search --config " + cfg_path.string());
        CHECK(r2.exit_code == 4);
    }

    SUBCASE("export csv recomputes cleanly") {
        fs::path exp = g_work / "export_csv";
        RunOutput r2 = run_cli("--out " + exp.string() + " export --run " + run_a.string() +
                               " --format csv");
        REQUIRE(r2.exit_code == 0);
        std::string csv = slurp(exp / "front.csv");
        std::istringstream is(csv);
        std::string line;
        std::getline(is, line);
        CHECK(line == "f1,f2,depth,breadth,num_c");
        int rows = 0;
        while (std::getline(is, line)) {
            ++rows;
            double f1, f2;
            int depth, breadth, nc;
            char comma;
            std::istringstream ls(line);
            ls >> f1 >> comma >> f2 >> comma >> depth >> comma >> breadth >> comma >> nc;
            double recomputed =
                (1.0 - (depth - 1) / 10.0) + breadth / 200.0 + (0.001 - nc / 20000.0);
            CHECK(f2 == doctest::Approx(recomputed).epsilon(1e-12));
        }
        int front_files = 0;
        for (const auto& e : fs::directory_iterator(run_a / "front"))
            front_files += e.path().extension() == ".json";
        CHECK(rows == front_files);
    }

    SUBCASE("export dot emits well-formed graphs") {
        fs::path exp = g_work / "export_dot";
        RunOutput r2 = run_cli("--out " + exp.string() + " export --run " + run_a.string() +
                               " --format dot");
        REQUIRE(r2.exit_code == 0);
        int checked = 0;
        for (const auto& e : fs::directory_iterator(exp)) {
            if (e.path().extension() != ".dot") continue;
            CHECK(testkit::dot_well_formed(slurp(e.path())));
            ++checked;
        }
        CHECK(checked > 0);
    }

    SUBCASE("export on an unfinished run exits 4") {
        fs::path empty = g_work / "not_a_run";
        fs::create_directories(empty);
        RunOutput r2 = run_cli("export --run " + empty.string() + " --format csv");
        CHECK(r2.exit_code == 4);
    }
}

TEST_CASE("train command") {
    fs::path mf_tree = g_work / "mf.json";
    write_file(mf_tree, cdnas::to_json(cdnas::seed_tree(cdnas::BaselineModel::MF)) + "\n");

    SUBCASE("retraining the inner-product tree beats a student-only tree") {
        RunOutput mf = run_cli("--seed 3 train --tree " + mf_tree.string() +
                               " --synthetic --synthetic-seed 11 --epochs 12");
        REQUIRE(mf.exit_code == 0);
        json mf_report = json::parse(mf.out);

        fs::path lone_tree = g_work / "lone.json";
        write_file(lone_tree,
                   cdnas::to_json(cdnas::GenomeTree::unary(
                       cdnas::OpKind::Sigmoid, cdnas::GenomeTree::leaf(cdnas::LeafKind::HS))) +
                       "\n");
        RunOutput lone = run_cli("--seed 3 train --tree " + lone_tree.string() +
                                 " --synthetic --synthetic-seed 11 --epochs 12");
        REQUIRE(lone.exit_code == 0);
        json lone_report = json::parse(lone.out);

        CHECK(mf_report["auc"].get<double>() > lone_report["auc"].get<double>());
        CHECK(mf_report["auc"].get<double>() > 0.7);
    }

    SUBCASE("zero epochs means an untrained model near AUC 0.5") {
        RunOutput r = run_cli("--seed 4 train --tree " + mf_tree.string() +
                              " --synthetic --synthetic-seed 11 --epochs 0");
        REQUIRE(r.exit_code == 0);
        json report = json::parse(r.out);
        CHECK(report["auc"].get<double>() == doctest::Approx(0.5).epsilon(0.1));
    }

    SUBCASE("an infeasible tree exits 3 and names the nodes") {
        fs::path bad_tree = g_work / "bad.json";
        write_file(bad_tree, R"({"op":"Mean","children":[{"op":"Sum","children":[{"leaf":"H_S"}]}]})");
        RunOutput r = run_cli("train --tree " + bad_tree.string() + " --synthetic");
        CHECK(r.exit_code == 3);
        CHECK(r.out.find("infeasible") != std::string::npos);
    }

    SUBCASE("checkpoint artifacts are written with --out") {
        fs::path ckpt = g_work / "ckpt";
        RunOutput r = run_cli("--seed 5 --out " + ckpt.string() + " train --tree " +
                              mf_tree.string() + " --synthetic --synthetic-seed 11 --epochs 2");
        REQUIRE(r.exit_code == 0);
        CHECK(fs::exists(ckpt / "model.json"));
        CHECK(fs::exists(ckpt / "params.bin"));
        CHECK(fs::exists(ckpt / "trace.csv"));
    }
}

int main(int argc, char** argv) {
    doctest::Context ctx;
    std::vector<const char*> pass;
    pass.push_back(argv[0]);
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--cli=", 0) == 0)
            g_cli = arg.substr(6);
        else
            pass.push_back(argv[i]);
    }
    if (g_cli.empty()) {
        std::fprintf(stderr, "missing --cli=<path to cdnas binary>\n");
        return 1;
    }
    g_work = fs::temp_directory_path() / "cdnas_cli_test";
    fs::remove_all(g_work);
    fs::create_directories(g_work);

    ctx.applyCommandLine(int(pass.size()), const_cast<char**>(pass.data()));
    int rc = ctx.run();
    fs::remove_all(g_work);
    return rc;
}
