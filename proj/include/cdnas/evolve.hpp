#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cdnas/data.hpp"
#include "cdnas/genome.hpp"
#include "cdnas/model.hpp"

namespace cdnas {

struct Individual {
    GenomeTree tree;
    std::string key;  // canonical_key(tree)
    double f1 = 0;    // validation AUC, set once evaluated
    double f2 = 0;    // interpretability, always kept in sync with the tree
    int rank = -1;
    double crowding = 0;
    bool evaluated = false;
};

Individual make_individual(GenomeTree tree);

// Run-long map canonical key -> objectives; duplicates reuse cached values
// instead of retraining. Insertion order is preserved for serialization.
class Archive {
public:
    struct Entry {
        double f1, f2;
    };

    bool contains(const std::string& key) const { return map_.count(key) != 0; }
    const Entry* find(const std::string& key) const {
        auto it = map_.find(key);
        return it == map_.end() ? nullptr : &it->second;
    }
    void insert(const std::string& key, double f1, double f2);
    size_t size() const { return order_.size(); }
    const std::vector<std::string>& order() const { return order_; }
    const std::map<std::string, Entry>& entries() const { return map_; }

private:
    std::map<std::string, Entry> map_;
    std::vector<std::string> order_;
};

struct SearchConfig {
    int pop = 100;
    int generations = 100;
    int node_lo = 2, node_hi = 4;
    TrainConfig train;  // per-candidate trainer; its seed is derived per key
    uint64_t seed = 0;
    int threads = 0;  // 0 = all cores; CDM_EVO_THREADS caps either way
};

// --- variation -------------------------------------------------------------

// Swaps a uniformly chosen non-root subtree between the parents. Retries on
// a depth-cap violation, falling back to parent clones.
std::pair<GenomeTree, GenomeTree> exchange(const GenomeTree& p1, const GenomeTree& p2, Rng& rng);

// Removes one computation node and promotes one of its child subtrees;
// num_c always drops by exactly 1. Requires >= 2 computation nodes.
GenomeTree delete_node(const GenomeTree& p, Rng& rng);

// Swaps a uniformly chosen computation node's operator for a uniformly
// sampled one, adding a leaf (unary->binary) or keeping one child
// (binary->unary) as needed.
GenomeTree replace_node(const GenomeTree& p, Rng& rng);

// Inserts a uniformly sampled operator above a uniformly chosen computation
// node. Retries on a depth-cap violation, falling back to a parent clone.
GenomeTree insert_node(const GenomeTree& p, Rng& rng);

// Pairwise offspring generation: exchange when both parents have >= 2
// computation nodes and the draw picks it, otherwise a single-parent
// operation applied to each parent. |offspring| == |pool|.
std::vector<GenomeTree> genetic_operation(const std::vector<Individual>& pool, Rng& rng);

// --- NSGA-II ---------------------------------------------------------------

// Front index per point, both objectives maximized.
std::vector<int> fast_nondominated_sort(const std::vector<std::pair<double, double>>& pts);

// Crowding distances within one front; boundary points get infinity.
std::vector<double> crowding_distance(const std::vector<std::pair<double, double>>& front);

void assign_rank_crowding(std::vector<Individual>& pop);

// pop independent binary tournaments: lower rank wins, then larger crowding,
// then a coin flip.
std::vector<Individual> tournament_select(const std::vector<Individual>& pop, Rng& rng);

// Whole fronts in rank order; the splitting front truncated by descending
// crowding (ties broken uniformly). Ranks/crowding recomputed on the result.
std::vector<Individual> environmental_selection(std::vector<Individual> unioned, int pop,
                                                Rng& rng);

// --- search ----------------------------------------------------------------

// Half seed-derived variants (the four pristine baselines first), half
// random trees; archive duplicates are regenerated up to 10 times.
std::vector<Individual> initialize_population(const SearchConfig& cfg, Rng& rng,
                                              const Archive& archive);

struct GenRecord {
    int generation = 0;
    double best_f1 = 0;  // best validation AUC over everything evaluated so far
    int front_size = 0;
    size_t archive_size = 0;
    std::vector<std::pair<double, double>> front;  // rank-0 objective pairs
};

struct SearchResult {
    std::vector<Individual> front;  // deduplicated, sorted by f1 desc
    std::vector<GenRecord> history;
    Archive archive;
};

SearchResult run_search(const SearchConfig& cfg, const ResponseDataset& ds);

// Trains every not-yet-archived individual (in parallel) and fills f1 from
// the archive. Exposed for the CLI's single-architecture path and tests.
void evaluate_individuals(std::vector<Individual>& inds, Archive& archive,
                          const SearchConfig& cfg, const ResponseDataset& ds);

int effective_threads(int requested);

}  // namespace cdnas
