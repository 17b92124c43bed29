#include "cdnas/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cdnas/errors.hpp"
#include "cdnas/tape.hpp"

namespace cdnas {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

int parse_int(const std::string& tok, const std::string& file, int line_no) {
    try {
        size_t used = 0;
        int v = std::stoi(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw DataError(file + ":" + std::to_string(line_no) + ": bad integer '" + tok + "'");
    }
}

// round-half-up
size_t round_cut(double x) { return size_t(std::floor(x + 0.5)); }

}  // namespace

std::vector<double> QMatrix::row(int exercise) const {
    std::vector<double> r(concepts);
    const uint8_t* p = cells.data() + size_t(exercise) * concepts;
    for (int k = 0; k < concepts; ++k) r[k] = double(p[k]);
    return r;
}

RawData load_dataset(const std::string& logs_path, const std::string& q_path) {
    RawData data;
    std::map<std::string, int> exercise_map;

    // Q-matrix first: it defines the exercise universe.
    std::ifstream qf(q_path);
    if (!qf) throw DataError("cannot open Q-matrix file: " + q_path);
    std::string line;
    if (!std::getline(qf, line)) throw DataError(q_path + ": empty file");
    auto header = split_csv_line(line);
    if (header.size() < 2 || header[0] != "exercise_id")
        throw DataError(q_path + ":1: expected header exercise_id,concept_1.. or exercise_id,concept_id");

    bool sparse = header.size() == 2 && header[1] == "concept_id";
    int line_no = 1;

    if (sparse) {
        std::map<std::string, int> concept_map;
        std::vector<std::pair<int, int>> pairs;  // (exercise, concept)
        while (std::getline(qf, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto f = split_csv_line(line);
            if (f.size() != 2)
                throw DataError(q_path + ":" + std::to_string(line_no) + ": expected 2 fields");
            auto [eit, e_fresh] = exercise_map.emplace(f[0], int(data.exercise_ids.size()));
            if (e_fresh) data.exercise_ids.push_back(f[0]);
            auto [cit, c_fresh] = concept_map.emplace(f[1], int(concept_map.size()));
            pairs.emplace_back(eit->second, cit->second);
        }
        data.q.exercises = int(data.exercise_ids.size());
        data.q.concepts = int(concept_map.size());
        if (data.q.exercises == 0) throw DataError(q_path + ": no Q-matrix rows");
        data.q.cells.assign(size_t(data.q.exercises) * data.q.concepts, 0);
        for (auto [e, c] : pairs) data.q.cells[size_t(e) * data.q.concepts + c] = 1;
    } else {
        int k = int(header.size()) - 1;
        while (std::getline(qf, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto f = split_csv_line(line);
            if (int(f.size()) != k + 1)
                throw DataError(q_path + ":" + std::to_string(line_no) + ": expected " +
                                std::to_string(k + 1) + " fields");
            auto [it, fresh] = exercise_map.emplace(f[0], int(data.exercise_ids.size()));
            if (!fresh)
                throw DataError(q_path + ":" + std::to_string(line_no) +
                                ": duplicate exercise row '" + f[0] + "'");
            data.exercise_ids.push_back(f[0]);
            int ones = 0;
            for (int c = 0; c < k; ++c) {
                int v = parse_int(f[c + 1], q_path, line_no);
                if (v != 0 && v != 1)
                    throw DataError(q_path + ":" + std::to_string(line_no) +
                                    ": Q cells must be 0 or 1");
                data.q.cells.push_back(uint8_t(v));
                ones += v;
            }
            if (ones == 0)
                throw DataError(q_path + ":" + std::to_string(line_no) +
                                ": exercise '" + f[0] + "' tags no concept");
        }
        data.q.exercises = int(data.exercise_ids.size());
        data.q.concepts = k;
        if (data.q.exercises == 0) throw DataError(q_path + ": no Q-matrix rows");
    }

    // Response logs.
    std::ifstream lf(logs_path);
    if (!lf) throw DataError("cannot open logs file: " + logs_path);
    if (!std::getline(lf, line)) throw DataError(logs_path + ": empty file");
    auto lh = split_csv_line(line);
    if (lh.size() != 3 || lh[0] != "student_id" || lh[1] != "exercise_id" || lh[2] != "score")
        throw DataError(logs_path + ":1: expected header student_id,exercise_id,score");

    std::map<std::string, int> student_map;
    line_no = 1;
    while (std::getline(lf, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto f = split_csv_line(line);
        if (f.size() != 3)
            throw DataError(logs_path + ":" + std::to_string(line_no) + ": expected 3 fields");
        auto [sit, s_fresh] = student_map.emplace(f[0], int(data.student_ids.size()));
        if (s_fresh) data.student_ids.push_back(f[0]);
        auto eit = exercise_map.find(f[1]);
        if (eit == exercise_map.end())
            throw DataError(logs_path + ":" + std::to_string(line_no) + ": exercise '" + f[1] +
                            "' not present in the Q-matrix");
        int score = parse_int(f[2], logs_path, line_no);
        if (score != 0 && score != 1)
            throw DataError(logs_path + ":" + std::to_string(line_no) + ": score must be 0 or 1");
        data.logs.push_back({sit->second, eit->second, score});
    }
    if (data.logs.empty()) throw DataError(logs_path + ": no response logs");
    return data;
}

void filter_students(RawData& data, int min_logs) {
    std::vector<int> counts(data.student_ids.size(), 0);
    for (const auto& log : data.logs) counts[log.student]++;

    std::vector<int> remap(data.student_ids.size(), -1);
    std::vector<std::string> kept_ids;
    for (size_t s = 0; s < counts.size(); ++s) {
        if (counts[s] >= min_logs) {
            remap[s] = int(kept_ids.size());
            kept_ids.push_back(data.student_ids[s]);
        }
    }
    if (kept_ids.empty())
        throw DataError("no student has at least " + std::to_string(min_logs) + " response logs");

    std::vector<ResponseLog> kept;
    kept.reserve(data.logs.size());
    for (const auto& log : data.logs)
        if (remap[log.student] >= 0) kept.push_back({remap[log.student], log.exercise, log.score});
    data.logs = std::move(kept);
    data.student_ids = std::move(kept_ids);
}

ResponseDataset split_per_student(const RawData& data, SplitRatios ratios, uint64_t seed) {
    if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1");

    int n_students = int(data.student_ids.size());
    std::vector<std::vector<size_t>> per_student(n_students);
    for (size_t i = 0; i < data.logs.size(); ++i)
        per_student[data.logs[i].student].push_back(i);

    ResponseDataset ds;
    ds.num_students = n_students;
    ds.num_exercises = data.q.exercises;
    ds.num_concepts = data.q.concepts;
    ds.q = data.q;
    ds.student_ids = data.student_ids;
    ds.exercise_ids = data.exercise_ids;

    Rng rng(seed);
    for (int s = 0; s < n_students; ++s) {
        auto& rows = per_student[s];
        rng.shuffle(rows);
        size_t n = rows.size();
        size_t c1 = round_cut(ratios.train * double(n));
        size_t c2 = round_cut((ratios.train + ratios.val) * double(n));
        for (size_t i = 0; i < n; ++i) {
            auto& dst = i < c1 ? ds.train : (i < c2 ? ds.val : ds.test);
            auto& dst_rows = i < c1 ? ds.train_rows : (i < c2 ? ds.val_rows : ds.test_rows);
            dst.push_back(data.logs[rows[i]]);
            dst_rows.push_back(rows[i]);
        }
    }
    return ds;
}

std::vector<std::vector<int>> batches(size_t n, int batch_size, uint64_t seed, int epoch) {
    std::vector<int> perm(n);
    for (size_t i = 0; i < n; ++i) perm[i] = int(i);
    Rng rng(fnv1a64_mix(seed, "epoch:" + std::to_string(epoch)));
    rng.shuffle(perm);

    std::vector<std::vector<int>> out;
    for (size_t start = 0; start < n; start += batch_size) {
        size_t end = std::min(n, start + batch_size);
        out.emplace_back(perm.begin() + start, perm.begin() + end);
    }
    return out;
}

RawData make_synthetic(const SyntheticSpec& spec) {
    Rng rng(spec.seed);
    auto normal = [&rng]() {
        double u1 = 1.0 - rng.real();
        double u2 = rng.real();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    };

    int n = spec.students, m = spec.exercises, k = spec.concepts;
    std::vector<double> ws(size_t(n) * k), we(size_t(m) * k);
    for (double& x : ws) x = spec.signal_scale * normal();
    for (double& x : we) x = spec.signal_scale * normal();

    RawData data;
    data.q.exercises = m;
    data.q.concepts = k;
    data.q.cells.assign(size_t(m) * k, 0);
    std::vector<int> concept_ids(k);
    for (int c = 0; c < k; ++c) concept_ids[c] = c;
    for (int e = 0; e < m; ++e) {
        int tags = 1 + int(rng.index(uint64_t(std::min(4, k))));
        rng.shuffle(concept_ids);
        for (int t = 0; t < tags; ++t) data.q.cells[size_t(e) * k + concept_ids[t]] = 1;
        data.exercise_ids.push_back("e" + std::to_string(e));
    }

    for (int s = 0; s < n; ++s) {
        data.student_ids.push_back("s" + std::to_string(s));
        for (int l = 0; l < spec.logs_per_student; ++l) {
            int e = int(rng.index(uint64_t(m)));
            double dot = 0;
            for (int c = 0; c < k; ++c) dot += ws[size_t(s) * k + c] * we[size_t(e) * k + c];
            int score = rng.real() < stable_sigmoid(dot) ? 1 : 0;
            data.logs.push_back({s, e, score});
        }
    }
    return data;
}

void write_logs_csv(const RawData& data, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "student_id,exercise_id,score\n";
    for (const auto& log : data.logs)
        f << data.student_ids[log.student] << "," << data.exercise_ids[log.exercise] << ","
          << log.score << "\n";
}

void write_q_csv(const RawData& data, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "exercise_id";
    for (int c = 0; c < data.q.concepts; ++c) f << ",concept_" << (c + 1);
    f << "\n";
    for (int e = 0; e < data.q.exercises; ++e) {
        f << data.exercise_ids[e];
        for (int c = 0; c < data.q.concepts; ++c) f << "," << int(data.q.at(e, c));
        f << "\n";
    }
}

std::string split_manifest_json(const ResponseDataset& ds, SplitRatios ratios, uint64_t seed) {
    nlohmann::json j;
    j["seed"] = seed;
    j["ratios"] = {ratios.train, ratios.val, ratios.test};
    j["rows"] = {{"train", ds.train_rows}, {"val", ds.val_rows}, {"test", ds.test_rows}};
    return j.dump(2);
}

}  // namespace cdnas
