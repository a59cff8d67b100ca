#pragma once

#include "kcforge/congruity.hpp"
#include "kcforge/corpus.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace kcforge {

/// Dense symmetric distances with a zero diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    /// `values` is row-major n*n; checked for symmetry, zero diagonal, finiteness.
    DistanceMatrix(std::vector<std::string> ids, std::vector<double> values);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    double at(std::size_t i, std::size_t j) const { return values_[i * ids_.size() + j]; }

private:
    std::vector<std::string> ids_;
    std::vector<double> values_;
};

/// d(i, j) = c_max - c(i, j), c_max the largest off-diagonal congruity.
DistanceMatrix to_distance(const CongruityMatrix& m);

// ─── Dendrogram ───────────────────────────────────────────────
// Cluster ids follow the scipy linkage convention: leaves are 0..n-1 in
// DistanceMatrix order and the m-th merge creates cluster n + m.

struct Merge {
    int a = 0;   // child whose smallest member id sorts first
    int b = 0;
    double height = 0.0;
    int new_id = 0;

    friend bool operator==(const Merge&, const Merge&) = default;
};

struct Dendrogram {
    std::vector<std::string> leaves;
    std::vector<Merge> merges;   // n - 1 entries, heights nondecreasing

    friend bool operator==(const Dendrogram&, const Dendrogram&) = default;
};

/// Average-linkage (UPGMA) agglomeration. Among equally close pairs the one
/// whose (smaller, larger) smallest-member ids sort first merges first.
Dendrogram agglomerate(const DistanceMatrix& d);

struct Partition {
    int k = 0;
    std::vector<std::string> ids;
    std::vector<int> labels;   // aligned with ids; cluster indices in [0, k)

    int label_of(const std::string& id) const;
    /// Members of each cluster, in `ids` order.
    std::vector<std::vector<std::size_t>> clusters() const;

    friend bool operator==(const Partition&, const Partition&) = default;
};

/// Undoes the last k-1 merges. Cluster indices are assigned in order of
/// each cluster's smallest member id.
Partition cut(const Dendrogram& dend, int k);

/// Mean silhouette over all points; singleton-cluster points contribute 0.
double silhouette(const DistanceMatrix& d, const Partition& p);

/// argmax of silhouette over k in [k_min, k_max]; ties -> smallest k.
int select_k(const DistanceMatrix& d, int k_min, int k_max);

/// One label per cluster: "kc_" + medoid id (ties -> smallest id).
KCModel to_kc_model(const Partition& p, const QuestionBank& bank, const DistanceMatrix& d,
                    std::string name = "clustered");

/// `# leaves=<id_1>,...` then one `a b height new_id` line per merge.
std::string format_dendrogram(const Dendrogram& dend);
Dendrogram parse_dendrogram(std::string_view text);
void save_dendrogram(const Dendrogram& dend, const std::filesystem::path& path);

} // namespace kcforge
