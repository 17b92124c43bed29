#include "cdnas/run_io.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "cdnas/errors.hpp"

namespace fs = std::filesystem;

namespace cdnas {

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace

void write_manifest(const std::string& dir, const std::string& config_echo_json,
                    const std::string& dataset_fingerprint, const std::string& status,
                    const RunPhaseClock& clock) {
    nlohmann::json j;
    j["tool_version"] = kToolVersion;
    j["status"] = status;
    j["config"] = nlohmann::json::parse(config_echo_json);
    j["dataset_fingerprint"] = dataset_fingerprint;
    j["wall_clock_seconds"] = {{"init", clock.init_seconds},
                               {"search", clock.search_seconds},
                               {"total", clock.total_seconds}};

    fs::create_directories(dir);
    fs::path tmp = fs::path(dir) / "manifest.json.tmp";
    {
        std::ofstream f(tmp);
        f << j.dump(2) << "\n";
    }
    fs::rename(tmp, fs::path(dir) / "manifest.json");
}

std::string read_manifest_status(const std::string& dir) {
    fs::path p = fs::path(dir) / "manifest.json";
    if (!fs::exists(p)) return "";
    try {
        nlohmann::json j = nlohmann::json::parse(read_file(p.string()));
        return j.value("status", "");
    } catch (const std::exception&) {
        return "";
    }
}

void write_history_csv(const std::string& path, const std::vector<GenRecord>& history) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "generation,best_f1,front_size,archive_size\n";
    f << std::setprecision(17);
    for (const auto& rec : history)
        f << rec.generation << "," << rec.best_f1 << "," << rec.front_size << ","
          << rec.archive_size << "\n";
}

void write_archive_jsonl(const std::string& path, const Archive& archive) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    for (const auto& key : archive.order()) {
        const Archive::Entry* e = archive.find(key);
        nlohmann::json j{{"key", key}, {"f1", e->f1}, {"f2", e->f2}};
        f << j.dump() << "\n";
    }
}

void write_front_dir(const std::string& dir, const std::vector<Individual>& front) {
    fs::create_directories(dir);
    for (size_t i = 0; i < front.size(); ++i) {
        const Individual& ind = front[i];
        std::ostringstream stem;
        stem << "ind_" << std::setw(3) << std::setfill('0') << i;

        TreeMetrics m = metrics(ind.tree);
        nlohmann::json j;
        j["key"] = ind.key;
        j["tree"] = nlohmann::json::parse(to_json(ind.tree));
        j["f1"] = ind.f1;
        j["f2"] = ind.f2;
        j["metrics"] = {{"depth", m.depth}, {"breadth", m.breadth}, {"num_c", m.num_c}};

        std::ofstream jf(fs::path(dir) / (stem.str() + ".json"));
        jf << j.dump(2) << "\n";
        std::ofstream df(fs::path(dir) / (stem.str() + ".dot"));
        df << to_dot(ind.tree);
    }
}

std::string fingerprint_text(const std::string& text) {
    uint64_t h = fnv1a64(text);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string fingerprint_files(const std::string& logs_path, const std::string& q_path) {
    return fingerprint_text(read_file(logs_path) + "\x1f" + read_file(q_path));
}

}  // namespace cdnas
