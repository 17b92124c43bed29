#include "cdnas/evolve.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <limits>
#include <mutex>
#include <set>
#include <thread>

#include "cdnas/errors.hpp"

namespace cdnas {

namespace {

constexpr int kVariationRetries = 10;

int num_c(const GenomeTree& t) { return int(op_node_ids(t).size()); }

int tree_depth(const GenomeTree& t) { return metrics(t).depth; }

}  // namespace

Individual make_individual(GenomeTree tree) {
    Individual ind;
    ind.f2 = interpretability(tree);
    ind.key = canonical_key(tree);
    ind.tree = std::move(tree);
    return ind;
}

void Archive::insert(const std::string& key, double f1, double f2) {
    auto [it, fresh] = map_.emplace(key, Entry{f1, f2});
    (void)it;
    if (fresh) order_.push_back(key);
}

// --- variation -------------------------------------------------------------

std::pair<GenomeTree, GenomeTree> exchange(const GenomeTree& p1, const GenomeTree& p2, Rng& rng) {
    for (int attempt = 0; attempt < kVariationRetries; ++attempt) {
        int a1 = 1 + int(rng.index(uint64_t(p1.num_nodes() - 1)));
        int a2 = 1 + int(rng.index(uint64_t(p2.num_nodes() - 1)));
        GenomeTree o1 = replace_subtree(p1, a1, extract_subtree(p2, a2));
        GenomeTree o2 = replace_subtree(p2, a2, extract_subtree(p1, a1));
        if (tree_depth(o1) > kMaxDepth || tree_depth(o2) > kMaxDepth) continue;
        return {repair(o1, rng), repair(o2, rng)};
    }
    return {p1, p2};
}

GenomeTree delete_node(const GenomeTree& p, Rng& rng) {
    std::vector<int> ops = op_node_ids(p);
    if (ops.size() < 2) throw ConstraintError("delete needs at least 2 computation nodes");

    for (int attempt = 0; attempt < 10000; ++attempt) {
        int id = ops[rng.index(ops.size())];
        const TreeNode& node = p.at(id);
        int keep, drop;
        if (node.child1 < 0) {
            keep = node.child0;
            drop = -1;
        } else if (rng.coin()) {
            keep = node.child0;
            drop = node.child1;
        } else {
            keep = node.child1;
            drop = node.child0;
        }
        // Exactly one computation node must go, and the root must stay a
        // computation node.
        if (drop >= 0 && !p.at(drop).is_leaf) continue;
        if (id == p.root() && p.at(keep).is_leaf) continue;
        GenomeTree kept = extract_subtree(p, keep);
        GenomeTree out = id == p.root() ? std::move(kept) : replace_subtree(p, id, kept);
        return repair(out, rng);
    }
    throw ConstraintError("delete found no admissible node");
}

GenomeTree replace_node(const GenomeTree& p, Rng& rng) {
    std::vector<int> ops = op_node_ids(p);
    int id = ops[rng.index(ops.size())];
    const TreeNode& node = p.at(id);
    OpKind fresh = kAllOps[rng.index(kNumOps)];

    GenomeTree scion;
    if (arity(node.op) == arity(fresh)) {
        scion = extract_subtree(p, id);
        scion.nodes[0].op = fresh;
    } else if (arity(fresh) == 2) {
        LeafKind leaf = kAllLeaves[rng.index(kAllLeaves.size())];
        scion = GenomeTree::binary(fresh, extract_subtree(p, node.child0),
                                   GenomeTree::leaf(leaf));
    } else {
        int keep = rng.coin() ? node.child0 : node.child1;
        scion = GenomeTree::unary(fresh, extract_subtree(p, keep));
    }
    GenomeTree out = id == p.root() ? std::move(scion) : replace_subtree(p, id, scion);
    return repair(out, rng);
}

GenomeTree insert_node(const GenomeTree& p, Rng& rng) {
    std::vector<int> ops = op_node_ids(p);
    for (int attempt = 0; attempt < kVariationRetries; ++attempt) {
        OpKind fresh = kAllOps[rng.index(kNumOps)];
        int id = ops[rng.index(ops.size())];
        GenomeTree scion;
        if (arity(fresh) == 1) {
            scion = GenomeTree::unary(fresh, extract_subtree(p, id));
        } else {
            LeafKind leaf = kAllLeaves[rng.index(kAllLeaves.size())];
            scion = GenomeTree::binary(fresh, extract_subtree(p, id), GenomeTree::leaf(leaf));
        }
        GenomeTree out = id == p.root() ? std::move(scion) : replace_subtree(p, id, scion);
        if (tree_depth(out) > kMaxDepth) continue;
        return repair(out, rng);
    }
    return p;
}

std::vector<GenomeTree> genetic_operation(const std::vector<Individual>& pool, Rng& rng) {
    if (pool.size() % 2 != 0) throw ConfigError("mating pool size must be even");
    std::vector<GenomeTree> offspring;
    offspring.reserve(pool.size());

    for (size_t i = 0; i + 1 < pool.size(); i += 2) {
        const GenomeTree& p1 = pool[i].tree;
        const GenomeTree& p2 = pool[i + 1].tree;
        bool both_big = num_c(p1) >= 2 && num_c(p2) >= 2;
        int pick = both_big ? 1 + int(rng.index(4)) : 3 + int(rng.index(2));
        switch (pick) {
            case 1: {
                auto [o1, o2] = exchange(p1, p2, rng);
                offspring.push_back(std::move(o1));
                offspring.push_back(std::move(o2));
                break;
            }
            case 2:
                offspring.push_back(delete_node(p1, rng));
                offspring.push_back(delete_node(p2, rng));
                break;
            case 3:
                offspring.push_back(replace_node(p1, rng));
                offspring.push_back(replace_node(p2, rng));
                break;
            default:
                offspring.push_back(insert_node(p1, rng));
                offspring.push_back(insert_node(p2, rng));
                break;
        }
    }
    return offspring;
}

// --- NSGA-II ---------------------------------------------------------------

namespace {

bool dominates(const std::pair<double, double>& a, const std::pair<double, double>& b) {
    return a.first >= b.first && a.second >= b.second &&
           (a.first > b.first || a.second > b.second);
}

}  // namespace

std::vector<int> fast_nondominated_sort(const std::vector<std::pair<double, double>>& pts) {
    size_t n = pts.size();
    std::vector<std::vector<int>> dominated(n);
    std::vector<int> dom_count(n, 0);
    std::vector<int> rank(n, -1);

    std::vector<int> current;
    for (size_t p = 0; p < n; ++p) {
        for (size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (dominates(pts[p], pts[q]))
                dominated[p].push_back(int(q));
            else if (dominates(pts[q], pts[p]))
                dom_count[p]++;
        }
        if (dom_count[p] == 0) {
            rank[p] = 0;
            current.push_back(int(p));
        }
    }

    int level = 0;
    while (!current.empty()) {
        std::vector<int> next;
        for (int p : current) {
            for (int q : dominated[p]) {
                if (--dom_count[q] == 0) {
                    rank[q] = level + 1;
                    next.push_back(q);
                }
            }
        }
        ++level;
        current = std::move(next);
    }
    return rank;
}

std::vector<double> crowding_distance(const std::vector<std::pair<double, double>>& front) {
    size_t n = front.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), inf);
        return dist;
    }

    for (int obj = 0; obj < 2; ++obj) {
        auto value = [&](size_t i) { return obj == 0 ? front[i].first : front[i].second; };
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            if (value(a) != value(b)) return value(a) < value(b);
            return a < b;
        });
        dist[order.front()] = inf;
        dist[order.back()] = inf;
        double range = value(order.back()) - value(order.front());
        if (range <= 0) continue;  // degenerate objective contributes nothing
        for (size_t i = 1; i + 1 < n; ++i) {
            if (dist[order[i]] == inf) continue;
            dist[order[i]] += (value(order[i + 1]) - value(order[i - 1])) / range;
        }
    }
    return dist;
}

void assign_rank_crowding(std::vector<Individual>& pop) {
    std::vector<std::pair<double, double>> pts;
    pts.reserve(pop.size());
    for (const auto& ind : pop) pts.emplace_back(ind.f1, ind.f2);
    std::vector<int> rank = fast_nondominated_sort(pts);

    int max_rank = 0;
    for (size_t i = 0; i < pop.size(); ++i) {
        pop[i].rank = rank[i];
        max_rank = std::max(max_rank, rank[i]);
    }
    for (int level = 0; level <= max_rank; ++level) {
        std::vector<size_t> members;
        std::vector<std::pair<double, double>> front;
        for (size_t i = 0; i < pop.size(); ++i) {
            if (rank[i] == level) {
                members.push_back(i);
                front.push_back(pts[i]);
            }
        }
        std::vector<double> dist = crowding_distance(front);
        for (size_t j = 0; j < members.size(); ++j) pop[members[j]].crowding = dist[j];
    }
}

std::vector<Individual> tournament_select(const std::vector<Individual>& pop, Rng& rng) {
    std::vector<Individual> pool;
    pool.reserve(pop.size());
    for (size_t t = 0; t < pop.size(); ++t) {
        const Individual& a = pop[rng.index(pop.size())];
        const Individual& b = pop[rng.index(pop.size())];
        const Individual* win;
        if (a.rank != b.rank)
            win = a.rank < b.rank ? &a : &b;
        else if (a.crowding != b.crowding)
            win = a.crowding > b.crowding ? &a : &b;
        else
            win = rng.coin() ? &a : &b;
        pool.push_back(*win);
    }
    return pool;
}

std::vector<Individual> environmental_selection(std::vector<Individual> unioned, int pop,
                                                Rng& rng) {
    if (int(unioned.size()) < pop)
        throw ConstraintError("environmental selection needs |union| >= pop");

    std::vector<std::pair<double, double>> pts;
    pts.reserve(unioned.size());
    for (const auto& ind : unioned) pts.emplace_back(ind.f1, ind.f2);
    std::vector<int> rank = fast_nondominated_sort(pts);

    std::vector<std::vector<size_t>> fronts;
    for (size_t i = 0; i < unioned.size(); ++i) {
        if (int(fronts.size()) <= rank[i]) fronts.resize(rank[i] + 1);
        fronts[rank[i]].push_back(i);
    }

    std::vector<Individual> selected;
    selected.reserve(pop);
    for (const auto& front : fronts) {
        if (int(selected.size()) + int(front.size()) <= pop) {
            for (size_t i : front) selected.push_back(std::move(unioned[i]));
            if (int(selected.size()) == pop) break;
            continue;
        }
        // Splitting front: truncate by descending crowding, uniform tiebreak.
        std::vector<std::pair<double, double>> fpts;
        for (size_t i : front) fpts.emplace_back(pts[i]);
        std::vector<double> dist = crowding_distance(fpts);
        struct Slot {
            size_t idx;
            double crowding;
            uint64_t tie;
        };
        std::vector<Slot> slots;
        for (size_t j = 0; j < front.size(); ++j) slots.push_back({front[j], dist[j], rng.u64()});
        std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
            if (a.crowding != b.crowding) return a.crowding > b.crowding;
            return a.tie < b.tie;
        });
        for (const Slot& s : slots) {
            if (int(selected.size()) == pop) break;
            selected.push_back(std::move(unioned[s.idx]));
        }
        break;
    }

    assign_rank_crowding(selected);
    return selected;
}

// --- search ----------------------------------------------------------------

std::vector<Individual> initialize_population(const SearchConfig& cfg, Rng& rng,
                                              const Archive& archive) {
    if (cfg.pop < 8 || cfg.pop % 2 != 0)
        throw ConfigError("population size must be even and at least 8");

    std::set<std::string> seen;
    for (const auto& key : archive.order()) seen.insert(key);

    std::vector<Individual> pop;
    pop.reserve(cfg.pop);
    auto admit = [&](GenomeTree tree) {
        Individual ind = make_individual(std::move(tree));
        seen.insert(ind.key);
        pop.push_back(std::move(ind));
    };

    int half = cfg.pop / 2;
    for (int i = 0; i < half; ++i) {
        BaselineModel base = kAllBaselines[i % kAllBaselines.size()];
        if (i < int(kAllBaselines.size())) {
            admit(seed_tree(base));
            continue;
        }
        GenomeTree tree;
        for (int attempt = 0; attempt < 10; ++attempt) {
            GenomeTree seed = seed_tree(base);
            switch (rng.index(3)) {
                case 0: tree = delete_node(seed, rng); break;
                case 1: tree = replace_node(seed, rng); break;
                default: tree = insert_node(seed, rng); break;
            }
            if (!seen.count(canonical_key(tree))) break;
        }
        admit(std::move(tree));
    }
    for (int i = half; i < cfg.pop; ++i) {
        GenomeTree tree;
        for (int attempt = 0; attempt < 10; ++attempt) {
            tree = random_tree(cfg.node_lo, cfg.node_hi, rng);
            if (!seen.count(canonical_key(tree))) break;
        }
        admit(std::move(tree));
    }
    return pop;
}

int effective_threads(int requested) {
    int t = requested > 0 ? requested : int(std::thread::hardware_concurrency());
    if (t < 1) t = 1;
    if (const char* cap = std::getenv("CDM_EVO_THREADS")) {
        int c = std::atoi(cap);
        if (c >= 1) t = std::min(t, c);
    }
    return t;
}

void evaluate_individuals(std::vector<Individual>& inds, Archive& archive,
                          const SearchConfig& cfg, const ResponseDataset& ds) {
    // Unique keys that still need training, in first-seen order.
    std::vector<std::string> todo_keys;
    std::vector<const GenomeTree*> todo_trees;
    std::vector<double> todo_f2;
    std::set<std::string> todo_seen;
    for (const auto& ind : inds) {
        if (ind.evaluated || archive.contains(ind.key) || todo_seen.count(ind.key)) continue;
        todo_seen.insert(ind.key);
        todo_keys.push_back(ind.key);
        todo_trees.push_back(&ind.tree);
        todo_f2.push_back(ind.f2);
    }

    std::vector<double> f1(todo_keys.size(), 0.5);
    if (!todo_keys.empty()) {
        Dims dims{ds.num_students, ds.num_exercises, ds.num_concepts};
        auto train_one = [&](size_t i) {
            TrainConfig tc = cfg.train;
            tc.seed = fnv1a64_mix(cfg.seed, todo_keys[i]);
            CandidateModel model(*todo_trees[i], dims, tc.seed);
            f1[i] = model.train(ds, tc).best_val_auc;
        };

        int threads = std::min<int>(effective_threads(cfg.threads), int(todo_keys.size()));
        if (threads <= 1) {
            for (size_t i = 0; i < todo_keys.size(); ++i) train_one(i);
        } else {
            std::atomic<size_t> next{0};
            std::exception_ptr error;
            std::mutex error_mu;
            std::vector<std::thread> workers;
            for (int t = 0; t < threads; ++t) {
                workers.emplace_back([&]() {
                    for (size_t i = next.fetch_add(1); i < todo_keys.size();
                         i = next.fetch_add(1)) {
                        try {
                            train_one(i);
                        } catch (...) {
                            std::lock_guard<std::mutex> lock(error_mu);
                            if (!error) error = std::current_exception();
                        }
                    }
                });
            }
            for (auto& w : workers) w.join();
            if (error) std::rethrow_exception(error);
        }
    }

    for (size_t i = 0; i < todo_keys.size(); ++i)
        archive.insert(todo_keys[i], f1[i], todo_f2[i]);
    for (auto& ind : inds) {
        if (ind.evaluated) continue;
        const Archive::Entry* e = archive.find(ind.key);
        ind.f1 = e->f1;
        ind.evaluated = true;
    }
}

namespace {

GenRecord snapshot_generation(int generation, const std::vector<Individual>& pop,
                              const Archive& archive) {
    GenRecord rec;
    rec.generation = generation;
    rec.archive_size = archive.size();
    rec.best_f1 = 0;
    for (const auto& [key, e] : archive.entries()) rec.best_f1 = std::max(rec.best_f1, e.f1);
    for (const auto& ind : pop)
        if (ind.rank == 0) rec.front.emplace_back(ind.f1, ind.f2);
    std::sort(rec.front.begin(), rec.front.end());
    rec.front_size = int(rec.front.size());
    return rec;
}

}  // namespace

SearchResult run_search(const SearchConfig& cfg, const ResponseDataset& ds) {
    if (cfg.generations < 0) throw ConfigError("generations must be >= 0");
    if (cfg.train.epochs < 1 || cfg.train.patience < 1)
        throw ConfigError("training epochs and patience must be >= 1");
    if (cfg.node_lo < 1 || cfg.node_hi < cfg.node_lo) throw ConfigError("bad node range");

    Rng rng(cfg.seed);
    SearchResult result;

    std::vector<Individual> pop = initialize_population(cfg, rng, result.archive);
    evaluate_individuals(pop, result.archive, cfg, ds);
    assign_rank_crowding(pop);
    result.history.push_back(snapshot_generation(0, pop, result.archive));

    for (int g = 1; g <= cfg.generations; ++g) {
        std::vector<Individual> pool = tournament_select(pop, rng);
        std::vector<GenomeTree> trees = genetic_operation(pool, rng);
        std::vector<Individual> offspring;
        offspring.reserve(trees.size());
        for (auto& t : trees) offspring.push_back(make_individual(std::move(t)));
        evaluate_individuals(offspring, result.archive, cfg, ds);

        std::vector<Individual> unioned = std::move(pop);
        for (auto& ind : offspring) unioned.push_back(std::move(ind));
        pop = environmental_selection(std::move(unioned), cfg.pop, rng);
        result.history.push_back(snapshot_generation(g, pop, result.archive));
    }

    // Final non-dominated set, deduplicated by key.
    std::set<std::string> seen;
    for (const auto& ind : pop) {
        if (ind.rank != 0 || seen.count(ind.key)) continue;
        seen.insert(ind.key);
        result.front.push_back(ind);
    }
    std::sort(result.front.begin(), result.front.end(),
              [](const Individual& a, const Individual& b) {
                  if (a.f1 != b.f1) return a.f1 > b.f1;
                  if (a.f2 != b.f2) return a.f2 > b.f2;
                  return a.key < b.key;
              });
    return result;
}

}  // namespace cdnas
