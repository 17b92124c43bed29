#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "cdnas/errors.hpp"
#include "cdnas/evolve.hpp"
#include "cdnas/model.hpp"
#include "cdnas/run_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitRunState = 4;

struct DatasetSpec {
    std::string type;  // "csv" or "synthetic"
    std::string logs_path, q_path;
    cdnas::SyntheticSpec synthetic;
    cdnas::SplitRatios ratios;
    uint64_t split_seed = 1;
};

DatasetSpec dataset_spec_from_json(const json& j) {
    DatasetSpec spec;
    spec.type = j.value("type", "");
    if (spec.type == "csv") {
        if (!j.contains("logs") || !j.contains("q"))
            throw cdnas::ConfigError("csv dataset needs \"logs\" and \"q\" paths");
        spec.logs_path = j["logs"].get<std::string>();
        spec.q_path = j["q"].get<std::string>();
    } else if (spec.type == "synthetic") {
        spec.synthetic.students = j.value("students", spec.synthetic.students);
        spec.synthetic.exercises = j.value("exercises", spec.synthetic.exercises);
        spec.synthetic.concepts = j.value("concepts", spec.synthetic.concepts);
        spec.synthetic.logs_per_student =
            j.value("logs_per_student", spec.synthetic.logs_per_student);
        spec.synthetic.seed = j.value("seed", spec.synthetic.seed);
        spec.synthetic.signal_scale = j.value("signal_scale", spec.synthetic.signal_scale);
    } else {
        throw cdnas::ConfigError("dataset \"type\" must be \"csv\" or \"synthetic\"");
    }
    if (j.contains("ratios")) {
        auto r = j["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw cdnas::ConfigError("ratios must have 3 entries");
        spec.ratios = {r[0], r[1], r[2]};
    }
    spec.split_seed = j.value("split_seed", spec.split_seed);
    return spec;
}

json dataset_spec_to_json(const DatasetSpec& spec) {
    json j;
    j["type"] = spec.type;
    if (spec.type == "csv") {
        j["logs"] = spec.logs_path;
        j["q"] = spec.q_path;
    } else {
        j["students"] = spec.synthetic.students;
        j["exercises"] = spec.synthetic.exercises;
        j["concepts"] = spec.synthetic.concepts;
        j["logs_per_student"] = spec.synthetic.logs_per_student;
        j["seed"] = spec.synthetic.seed;
        j["signal_scale"] = spec.synthetic.signal_scale;
    }
    j["ratios"] = {spec.ratios.train, spec.ratios.val, spec.ratios.test};
    j["split_seed"] = spec.split_seed;
    return j;
}

struct LoadedDataset {
    cdnas::ResponseDataset ds;
    std::string fingerprint;
};

LoadedDataset load_from_spec(const DatasetSpec& spec) {
    LoadedDataset out;
    cdnas::RawData raw;
    if (spec.type == "csv") {
        raw = cdnas::load_dataset(spec.logs_path, spec.q_path);
        out.fingerprint = cdnas::fingerprint_files(spec.logs_path, spec.q_path);
    } else {
        raw = cdnas::make_synthetic(spec.synthetic);
        out.fingerprint = cdnas::fingerprint_text(dataset_spec_to_json(spec).dump());
    }
    cdnas::filter_students(raw);
    out.ds = cdnas::split_per_student(raw, spec.ratios, spec.split_seed);
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw cdnas::DataError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

int cmd_validate_data(const std::string& logs_path, const std::string& q_path, uint64_t seed) {
    cdnas::RawData raw = cdnas::load_dataset(logs_path, q_path);
    size_t loaded = raw.logs.size();
    cdnas::filter_students(raw);
    cdnas::ResponseDataset ds = cdnas::split_per_student(raw, {}, seed);

    std::cout << "N=" << ds.num_students << " M=" << ds.num_exercises
              << " K=" << ds.num_concepts << "\n";
    std::cout << "logs: " << loaded << " loaded, " << ds.total_logs()
              << " after the 15-log student filter\n";
    std::cout << "split preview (70/10/20, seed " << seed << "): train=" << ds.train.size()
              << " val=" << ds.val.size() << " test=" << ds.test.size() << "\n";
    return kExitOk;
}

int cmd_search(const std::string& config_path, const std::string& out_override,
               uint64_t seed_override, bool has_seed, int threads_override, bool resume) {
    json cj;
    try {
        cj = json::parse(read_file(config_path));
    } catch (const json::exception& e) {
        throw cdnas::ConfigError(std::string("config parse error: ") + e.what());
    }

    cdnas::SearchConfig cfg;
    cfg.pop = cj.value("population", cfg.pop);
    cfg.generations = cj.value("generations", cfg.generations);
    if (cj.contains("node_range")) {
        auto r = cj["node_range"].get<std::vector<int>>();
        if (r.size() != 2) throw cdnas::ConfigError("node_range must have 2 entries");
        cfg.node_lo = r[0];
        cfg.node_hi = r[1];
    }
    if (cj.contains("training")) {
        const json& t = cj["training"];
        cfg.train.epochs = t.value("epochs", cfg.train.epochs);
        cfg.train.lr = t.value("lr", cfg.train.lr);
        cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
        cfg.train.patience = t.value("patience", cfg.train.patience);
    }
    cfg.seed = cj.value("seed", cfg.seed);
    cfg.threads = cj.value("threads", cfg.threads);
    if (has_seed) cfg.seed = seed_override;
    if (threads_override > 0) cfg.threads = threads_override;
    if (!cj.contains("dataset")) throw cdnas::ConfigError("config needs a \"dataset\" object");
    DatasetSpec dspec = dataset_spec_from_json(cj["dataset"]);

    std::string out_dir = !out_override.empty() ? out_override : cj.value("out", "");
    if (out_dir.empty()) throw cdnas::ConfigError("no output directory (--out or config \"out\")");

    std::string status = cdnas::read_manifest_status(out_dir);
    if (status == "complete") {
        if (resume) {
            std::cout << "run already complete: " << out_dir << "\n";
            return kExitOk;
        }
        throw cdnas::RunStateError("output directory holds a completed run (use --resume or a fresh directory): " + out_dir);
    }

    json config_echo = cj;
    config_echo["population"] = cfg.pop;
    config_echo["generations"] = cfg.generations;
    config_echo["node_range"] = {cfg.node_lo, cfg.node_hi};
    config_echo["training"] = {{"epochs", cfg.train.epochs},
                               {"lr", cfg.train.lr},
                               {"batch_size", cfg.train.batch_size},
                               {"patience", cfg.train.patience}};
    config_echo["seed"] = cfg.seed;
    config_echo["threads"] = cfg.threads;
    config_echo["dataset"] = dataset_spec_to_json(dspec);

    auto t0 = std::chrono::steady_clock::now();
    LoadedDataset loaded = load_from_spec(dspec);
    auto t1 = std::chrono::steady_clock::now();

    cdnas::RunPhaseClock clock;
    clock.init_seconds = std::chrono::duration<double>(t1 - t0).count();
    cdnas::write_manifest(out_dir, config_echo.dump(), loaded.fingerprint, "running", clock);
    {
        std::ofstream cf(fs::path(out_dir) / "config.json");
        cf << config_echo.dump(2) << "\n";
        std::ofstream sf(fs::path(out_dir) / "split.json");
        sf << cdnas::split_manifest_json(loaded.ds, dspec.ratios, dspec.split_seed) << "\n";
    }

    cdnas::SearchResult result = cdnas::run_search(cfg, loaded.ds);
    auto t2 = std::chrono::steady_clock::now();

    cdnas::write_history_csv((fs::path(out_dir) / "history.csv").string(), result.history);
    cdnas::write_archive_jsonl((fs::path(out_dir) / "archive.jsonl").string(), result.archive);
    cdnas::write_front_dir((fs::path(out_dir) / "front").string(), result.front);

    clock.search_seconds = std::chrono::duration<double>(t2 - t1).count();
    clock.total_seconds = std::chrono::duration<double>(t2 - t0).count();
    cdnas::write_manifest(out_dir, config_echo.dump(), loaded.fingerprint, "complete", clock);

    std::cout << "search complete: " << result.front.size() << " non-dominated architectures, "
              << result.archive.size() << " evaluated, best f1 "
              << result.history.back().best_f1 << "\n";
    std::cout << "run directory: " << out_dir << "\n";
    return kExitOk;
}

int cmd_train(const std::string& tree_path, const DatasetSpec& dspec, int epochs, uint64_t seed,
              const std::string& out_dir) {
    cdnas::GenomeTree tree = cdnas::from_json(read_file(tree_path));

    cdnas::ShapeInfo shapes = cdnas::infer_shapes(tree);
    if (!shapes.feasible()) {
        std::ostringstream os;
        for (int id : shapes.infeasible) os << " " << id;
        throw cdnas::ShapeError("tree has infeasible nodes:" + os.str());
    }

    LoadedDataset loaded = load_from_spec(dspec);
    const cdnas::ResponseDataset& ds = loaded.ds;

    cdnas::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cdnas::Dims dims{ds.num_students, ds.num_exercises, ds.num_concepts};
    cdnas::CandidateModel model(tree, dims, cfg.seed);
    cdnas::TrainResult tr = model.train(ds, cfg);

    std::vector<int> labels(ds.test.size());
    for (size_t i = 0; i < ds.test.size(); ++i) labels[i] = ds.test[i].score;
    cdnas::EvalReport report = cdnas::evaluate(model.predict(ds.q, ds.test), labels);

    json j;
    j["acc"] = report.acc;
    j["rmse"] = report.rmse;
    if (report.auc)
        j["auc"] = *report.auc;
    else
        j["auc"] = nullptr;
    j["n"] = report.n;
    j["best_val_auc"] = tr.best_val_auc;
    j["epochs_run"] = tr.trace.size();
    std::cout << j.dump(2) << "\n";

    if (!out_dir.empty()) cdnas::save_checkpoint(model, cfg, tr, report, out_dir);
    return kExitOk;
}

int cmd_export(const std::string& run_dir, const std::string& format,
               const std::string& out_override) {
    if (cdnas::read_manifest_status(run_dir) != "complete")
        throw cdnas::RunStateError("not a finished run directory: " + run_dir);

    fs::path front_dir = fs::path(run_dir) / "front";
    std::vector<fs::path> tree_files;
    for (const auto& entry : fs::directory_iterator(front_dir))
        if (entry.path().extension() == ".json") tree_files.push_back(entry.path());
    std::sort(tree_files.begin(), tree_files.end());

    fs::path out_dir = out_override.empty() ? fs::path(run_dir) / "export" : fs::path(out_override);
    fs::create_directories(out_dir);

    if (format == "csv") {
        std::ofstream f(out_dir / "front.csv");
        f << "f1,f2,depth,breadth,num_c\n";
        f << std::setprecision(17);
        for (const auto& path : tree_files) {
            json j = json::parse(read_file(path.string()));
            f << j["f1"].get<double>() << "," << j["f2"].get<double>() << ","
              << j["metrics"]["depth"].get<int>() << "," << j["metrics"]["breadth"].get<int>()
              << "," << j["metrics"]["num_c"].get<int>() << "\n";
        }
        std::cout << "wrote " << (out_dir / "front.csv").string() << " (" << tree_files.size()
                  << " rows)\n";
    } else if (format == "dot" || format == "json") {
        for (const auto& path : tree_files) {
            json j = json::parse(read_file(path.string()));
            cdnas::GenomeTree tree = cdnas::from_json(j["tree"].dump());
            fs::path out = out_dir / path.stem();
            if (format == "dot") {
                std::ofstream f(out.string() + ".dot");
                f << cdnas::to_dot(tree);
            } else {
                std::ofstream f(out.string() + ".json");
                f << cdnas::to_json(tree) << "\n";
            }
        }
        std::cout << "wrote " << tree_files.size() << " ." << format << " files to "
                  << out_dir.string() << "\n";
    } else {
        throw cdnas::ConfigError("format must be dot, json or csv");
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolutionary architecture search for cognitive diagnosis models"};
    app.require_subcommand(1);

    uint64_t seed = 0;
    int threads = 0;
    std::string out;
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--threads", threads, "Evaluation parallelism (0 = all cores)");
    app.add_option("--out", out, "Output directory");

    auto* validate = app.add_subcommand("validate-data", "Load and check a logs/Q-matrix pair");
    std::string logs_path, q_path;
    validate->add_option("--logs", logs_path, "Response logs CSV")->required();
    validate->add_option("--q", q_path, "Q-matrix CSV")->required();

    auto* search = app.add_subcommand("search", "Run the multi-objective architecture search");
    std::string config_path;
    bool resume = false;
    search->add_option("--config", config_path, "Search config JSON")->required();
    search->add_flag("--resume", resume, "Exit 0 if the run is already complete");

    auto* train = app.add_subcommand("train", "Retrain one architecture and report test metrics");
    std::string tree_path;
    int epochs = 50;
    bool synthetic = false;
    uint64_t synthetic_seed = 7;
    uint64_t split_seed = 1;
    train->add_option("--tree", tree_path, "Tree JSON file")->required();
    train->add_option("--logs", logs_path, "Response logs CSV");
    train->add_option("--q", q_path, "Q-matrix CSV");
    train->add_flag("--synthetic", synthetic, "Use the built-in synthetic dataset");
    train->add_option("--synthetic-seed", synthetic_seed, "Synthetic generator seed");
    train->add_option("--split-seed", split_seed, "Per-student split seed");
    train->add_option("--epochs", epochs, "Training epochs");

    auto* exportc = app.add_subcommand("export", "Re-export a finished run's front");
    std::string run_dir, format = "csv";
    exportc->add_option("--run", run_dir, "Run directory")->required();
    exportc->add_option("--format", format, "dot, json or csv");

    CLI11_PARSE(app, argc, argv);

    bool has_seed = app.count("--seed") > 0;

    try {
        if (validate->parsed()) return cmd_validate_data(logs_path, q_path, seed);
        if (search->parsed()) return cmd_search(config_path, out, seed, has_seed, threads, resume);
        if (train->parsed()) {
            DatasetSpec dspec;
            if (synthetic) {
                dspec.type = "synthetic";
                dspec.synthetic.seed = synthetic_seed;
            } else {
                if (logs_path.empty() || q_path.empty())
                    throw cdnas::ConfigError("train needs --logs/--q or --synthetic");
                dspec.type = "csv";
                dspec.logs_path = logs_path;
                dspec.q_path = q_path;
            }
            dspec.split_seed = split_seed;
            return cmd_train(tree_path, dspec, epochs, seed, out);
        }
        if (exportc->parsed()) return cmd_export(run_dir, format, out);
    } catch (const cdnas::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const cdnas::ShapeError& e) {
        std::cerr << "infeasible tree: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const cdnas::StructuralError& e) {
        std::cerr << "bad tree: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const cdnas::RunStateError& e) {
        std::cerr << "run-state error: " << e.what() << "\n";
        return kExitRunState;
    } catch (const cdnas::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitOk;
}
