#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "cdnas/errors.hpp"
#include "cdnas/metrics.hpp"
#include "cdnas/model.hpp"
#include "helpers.hpp"

using namespace cdnas;

namespace {

Dims dims_of(const ResponseDataset& ds) {
    return {ds.num_students, ds.num_exercises, ds.num_concepts};
}

}  // namespace

TEST_CASE("assembling candidate models") {
    ResponseDataset ds = testkit::tiny_dataset();

    SUBCASE("scalar-rooted trees skip the FC head") {
        CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ds), 1);
        CHECK(m.output_mode() == OutputMode::ScalarDirect);
        CHECK_FALSE(m.store().has("fc1.W"));
    }

    SUBCASE("vector-rooted trees get the monotonic head") {
        CandidateModel m(seed_tree(BaselineModel::NCD), dims_of(ds), 1);
        CHECK(m.output_mode() == OutputMode::VectorFCHead);
        REQUIRE(m.store().has("fc1.W"));
        CHECK(m.store().at("fc1.W").monotonic);
        CHECK(m.store().at("fc2.W").monotonic);
        CHECK(m.store().at("fc3.W").monotonic);
        CHECK_FALSE(m.store().at("fc1.b").monotonic);
        CHECK(m.store().at("fc1.W").cols == 512);
        CHECK(m.store().at("fc2.W").cols == 256);
        CHECK(m.store().at("fc3.W").cols == 1);
    }

    SUBCASE("same seed, bit-identical parameters") {
        CandidateModel a(seed_tree(BaselineModel::IRT), dims_of(ds), 77);
        CandidateModel b(seed_tree(BaselineModel::IRT), dims_of(ds), 77);
        for (const auto& [name, t] : a.store().tensors)
            CHECK(t.data == b.store().at(name).data);
        CandidateModel c(seed_tree(BaselineModel::IRT), dims_of(ds), 78);
        CHECK(a.store().at("W_S").data != c.store().at("W_S").data);
    }

    SUBCASE("infeasible trees are rejected with node ids") {
        GenomeTree bad = GenomeTree::unary(
            OpKind::Mean, GenomeTree::unary(OpKind::Sum, GenomeTree::leaf(LeafKind::HS)));
        CHECK_THROWS_WITH_AS(CandidateModel(bad, dims_of(ds), 1), doctest::Contains("0"),
                             ShapeError);
    }
}

TEST_CASE("prediction") {
    ResponseDataset ds = testkit::tiny_dataset();

    SUBCASE("all-zero embeddings make the inner product tree output 0.5") {
        CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ds), 1);
        std::fill(m.store().at("W_S").data.begin(), m.store().at("W_S").data.end(), 0.0);
        std::fill(m.store().at("W_E").data.begin(), m.store().at("W_E").data.end(), 0.0);
        for (double p : m.predict(ds.q, ds.test)) CHECK(p == 0.5);
    }

    SUBCASE("a Sigmoid root is not squashed twice") {
        GenomeTree inner = seed_tree(BaselineModel::MF);
        GenomeTree wrapped = GenomeTree::unary(OpKind::Sigmoid, inner);
        // No parametric nodes in either tree, so equal seeds give equal
        // embeddings and the two paths must agree exactly.
        CandidateModel raw(inner, dims_of(ds), 5);
        CandidateModel sig(wrapped, dims_of(ds), 5);
        std::vector<double> a = raw.predict(ds.q, ds.test);
        std::vector<double> b = sig.predict(ds.q, ds.test);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
    }

    SUBCASE("probabilities stay inside the clamp") {
        Rng rng(31);
        for (int trial = 0; trial < 5; ++trial) {
            GenomeTree t = random_tree(1, 6, rng);
            CandidateModel m(t, dims_of(ds), rng.u64());
            std::vector<ResponseLog> items;
            for (int i = 0; i < 200; ++i)
                items.push_back({int(rng.index(ds.num_students)),
                                 int(rng.index(ds.num_exercises)), 0});
            try {
                for (double p : m.predict(ds.q, items)) {
                    CHECK(p >= 1e-7);
                    CHECK(p <= 1.0 - 1e-7);
                }
            } catch (const NumericOverflow&) {
                // acceptable for operator stacks that explode at init
            }
        }
    }
}

TEST_CASE("metric evaluation") {
    SUBCASE("worked example") {
        EvalReport r = evaluate({0.9, 0.2, 0.4}, {1, 0, 1});
        REQUIRE(r.auc.has_value());
        CHECK(*r.auc == doctest::Approx(1.0));
        CHECK(r.acc == doctest::Approx(2.0 / 3.0));
        CHECK(r.rmse == doctest::Approx(std::sqrt((0.01 + 0.04 + 0.36) / 3.0)));
    }

    SUBCASE("fully inverted ranking") {
        EvalReport r = evaluate({0.2, 0.9, 0.4}, {1, 0, 1});
        REQUIRE(r.auc.has_value());
        CHECK(*r.auc == doctest::Approx(0.0));
    }

    SUBCASE("all ties give 0.5") {
        EvalReport r = evaluate({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0});
        REQUIRE(r.auc.has_value());
        CHECK(*r.auc == doctest::Approx(0.5));
    }

    SUBCASE("single-class labels leave AUC empty but keep ACC/RMSE") {
        EvalReport r = evaluate({0.9, 0.8}, {1, 1});
        CHECK_FALSE(r.auc.has_value());
        CHECK(r.acc == doctest::Approx(1.0));
    }

    SUBCASE("matches the pairwise oracle on random inputs") {
        Rng rng(123);
        for (int trial = 0; trial < 50; ++trial) {
            size_t n = 20 + rng.index(200);
            std::vector<double> preds(n);
            std::vector<int> labels(n);
            bool pos = false, neg = false;
            for (size_t i = 0; i < n; ++i) {
                // coarse grid so ties actually happen
                preds[i] = double(rng.index(20)) / 20.0;
                labels[i] = rng.coin();
                (labels[i] ? pos : neg) = true;
            }
            if (!pos || !neg) continue;
            EvalReport r = evaluate(preds, labels);
            REQUIRE(r.auc.has_value());
            CHECK(*r.auc == doctest::Approx(testkit::brute_auc(preds, labels)).epsilon(1e-12));
        }
    }
}

TEST_CASE("training loop") {
    ResponseDataset ds = testkit::tiny_dataset();

    SUBCASE("loss decreases on constant labels") {
        ResponseDataset ones = ds;
        for (auto* split : {&ones.train, &ones.val, &ones.test})
            for (auto& log : *split) log.score = 1;
        CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ones), 2);
        TrainConfig cfg;
        cfg.epochs = 3;
        cfg.seed = 2;
        TrainResult tr = m.train(ones, cfg);
        REQUIRE(tr.trace.size() == 3);
        CHECK(tr.trace[1].train_loss < tr.trace[0].train_loss);
        CHECK(tr.trace[2].train_loss < tr.trace[1].train_loss);
    }

    SUBCASE("flat validation stops after 1 + patience epochs") {
        CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ds), 3);
        TrainConfig cfg;
        cfg.epochs = 30;
        cfg.lr = 0.0;  // nothing moves, so the AUC trace is flat
        cfg.patience = 5;
        cfg.seed = 3;
        TrainResult tr = m.train(ds, cfg);
        CHECK(tr.trace.size() == 6);
        CHECK(tr.best_epoch == 1);
    }

    SUBCASE("the epoch trace is deterministic") {
        TrainConfig cfg;
        cfg.epochs = 4;
        cfg.seed = 11;
        CandidateModel a(seed_tree(BaselineModel::MIRT), dims_of(ds), 11);
        CandidateModel b(seed_tree(BaselineModel::MIRT), dims_of(ds), 11);
        TrainResult ta = a.train(ds, cfg);
        TrainResult tb = b.train(ds, cfg);
        REQUIRE(ta.trace.size() == tb.trace.size());
        for (size_t i = 0; i < ta.trace.size(); ++i) {
            CHECK(ta.trace[i].train_loss == tb.trace[i].train_loss);
            CHECK(ta.trace[i].val_auc == tb.trace[i].val_auc);
        }
    }

    SUBCASE("the inner-product tree learns the planted signal") {
        CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ds), 4);
        TrainConfig cfg;
        cfg.epochs = 10;
        cfg.seed = 4;
        TrainResult tr = m.train(ds, cfg);
        CHECK(tr.best_val_auc > 0.7);
    }

    SUBCASE("monotone head: nudging one tree-output coordinate up never hurts") {
        CandidateModel m(seed_tree(BaselineModel::NCD), dims_of(ds), 5);
        TrainConfig cfg;
        cfg.epochs = 2;
        cfg.seed = 5;
        m.train(ds, cfg);
        Rng rng(6);
        for (int trial = 0; trial < 100; ++trial) {
            std::vector<double> y(ds.num_concepts);
            for (double& v : y) v = rng.uniform(-2.0, 2.0);
            double base = m.predict_from_tree_output(y);
            y[rng.index(y.size())] += 0.1;
            CHECK(m.predict_from_tree_output(y) >= base - 1e-12);
        }
    }
}

TEST_CASE("checkpoint files") {
    ResponseDataset ds = testkit::tiny_dataset();
    CandidateModel m(seed_tree(BaselineModel::MF), dims_of(ds), 8);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 8;
    TrainResult tr = m.train(ds, cfg);
    std::vector<int> labels(ds.test.size());
    for (size_t i = 0; i < labels.size(); ++i) labels[i] = ds.test[i].score;
    EvalReport report = evaluate(m.predict(ds.q, ds.test), labels);

    std::string dir = (std::filesystem::temp_directory_path() / "cdnas_ckpt_test").string();
    std::filesystem::remove_all(dir);
    save_checkpoint(m, cfg, tr, report, dir);
    CHECK(std::filesystem::exists(dir + "/model.json"));
    CHECK(std::filesystem::exists(dir + "/params.bin"));
    CHECK(std::filesystem::exists(dir + "/trace.csv"));

    size_t expected = 0;
    for (const auto& [name, t] : m.store().tensors) expected += t.data.size() * sizeof(double);
    CHECK(std::filesystem::file_size(dir + "/params.bin") == expected);
    std::filesystem::remove_all(dir);
}
