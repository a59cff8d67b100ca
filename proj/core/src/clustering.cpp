#include "kcforge/clustering.hpp"

#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace kcforge {

namespace {

// rank[i] = position of ids[i] in lexicographic order.
std::vector<std::size_t> id_ranks(const std::vector<std::string>& ids) {
    std::vector<std::size_t> order(ids.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto x, auto y) { return ids[x] < ids[y]; });
    std::vector<std::size_t> rank(ids.size());
    for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
    return rank;
}

} // namespace

DistanceMatrix::DistanceMatrix(std::vector<std::string> ids, std::vector<double> values)
    : ids_(std::move(ids)), values_(std::move(values)) {
    const std::size_t n = ids_.size();
    if (values_.size() != n * n) throw InputError("distance matrix shape does not match its ids");
    for (std::size_t i = 0; i < n; ++i) {
        if (at(i, i) != 0.0) throw InputError("distance matrix diagonal must be 0 at '" + ids_[i] + "'");
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = at(i, j);
            if (!std::isfinite(v) || v < 0.0 || v != at(j, i))
                throw InputError("invalid distance at (" + ids_[i] + ", " + ids_[j] + ")");
        }
    }
}

DistanceMatrix to_distance(const CongruityMatrix& m) {
    const std::size_t n = m.size();
    if (n < 2) throw InputError("distance needs at least 2 questions");
    double c_max = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double c = m.at(i, j);
            if (!std::isfinite(c))
                throw InputError("non-finite congruity at (" + m.ids()[i] + ", " + m.ids()[j] + ")");
            c_max = std::max(c_max, c);
        }
    }
    std::vector<double> values(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i != j) values[i * n + j] = c_max - m.at(i, j);
        }
    }
    return DistanceMatrix(m.ids(), std::move(values));
}

Dendrogram agglomerate(const DistanceMatrix& d) {
    const std::size_t n = d.size();
    Dendrogram dend;
    dend.leaves = d.ids();
    if (n < 2) return dend;

    const auto rank = id_ranks(d.ids());
    // Slot s holds one active cluster; linkage sums are raw distance sums so
    // that the average is sum / (|A| |B|).
    std::vector<double> sums(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sums[i * n + j] = d.at(i, j);
    std::vector<std::size_t> size(n, 1);
    std::vector<std::size_t> rep(rank);   // smallest member rank
    std::vector<int> cluster_id(n);
    std::iota(cluster_id.begin(), cluster_id.end(), 0);
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);

    for (std::size_t step = 0; step + 1 < n; ++step) {
        std::size_t best_p = 0, best_q = 0;
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_lo = 0, best_hi = 0;
        bool found = false;
        for (std::size_t x = 0; x < active.size(); ++x) {
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const std::size_t p = active[x], q = active[y];
                const double avg = sums[p * n + q] / static_cast<double>(size[p] * size[q]);
                const std::size_t lo = std::min(rep[p], rep[q]);
                const std::size_t hi = std::max(rep[p], rep[q]);
                if (!found || avg < best || (avg == best && std::pair(lo, hi) < std::pair(best_lo, best_hi))) {
                    found = true;
                    best = avg;
                    best_lo = lo;
                    best_hi = hi;
                    best_p = p;
                    best_q = q;
                }
            }
        }
        if (rep[best_p] > rep[best_q]) std::swap(best_p, best_q);

        Merge mg{cluster_id[best_p], cluster_id[best_q], best, static_cast<int>(n + step)};
        dend.merges.push_back(mg);

        // Merge q into p.
        for (std::size_t s : active) {
            if (s == best_p || s == best_q) continue;
            const double merged = sums[best_p * n + s] + sums[best_q * n + s];
            sums[best_p * n + s] = merged;
            sums[s * n + best_p] = merged;
        }
        size[best_p] += size[best_q];
        rep[best_p] = std::min(rep[best_p], rep[best_q]);
        cluster_id[best_p] = mg.new_id;
        active.erase(std::find(active.begin(), active.end(), best_q));
    }
    return dend;
}

int Partition::label_of(const std::string& id) const {
    auto it = std::find(ids.begin(), ids.end(), id);
    if (it == ids.end()) throw InputError("partition has no question '" + id + "'");
    return labels[static_cast<std::size_t>(it - ids.begin())];
}

std::vector<std::vector<std::size_t>> Partition::clusters() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < ids.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(i);
    return out;
}

Partition cut(const Dendrogram& dend, int k) {
    const std::size_t n = dend.leaves.size();
    if (k < 1 || static_cast<std::size_t>(k) > n)
        throw InputError("k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
    if (dend.merges.size() + 1 != n) throw InputError("dendrogram must have n - 1 merges");

    // Union-find over all 2n-1 cluster ids, applying the first n - k merges.
    std::vector<std::size_t> parent(2 * n - 1);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    const std::size_t applied = n - static_cast<std::size_t>(k);
    for (std::size_t m = 0; m < applied; ++m) {
        const auto& mg = dend.merges[m];
        parent[find(static_cast<std::size_t>(mg.a))] = static_cast<std::size_t>(mg.new_id);
        parent[find(static_cast<std::size_t>(mg.b))] = static_cast<std::size_t>(mg.new_id);
    }

    // Visit leaves in id order; first appearance of a root fixes its index.
    const auto rank = id_ranks(dend.leaves);
    std::vector<std::size_t> by_rank(n);
    for (std::size_t i = 0; i < n; ++i) by_rank[rank[i]] = i;
    std::vector<int> root_label(2 * n - 1, -1);
    Partition p;
    p.k = k;
    p.ids = dend.leaves;
    p.labels.assign(n, -1);
    int next = 0;
    for (std::size_t leaf : by_rank) {
        auto root = find(leaf);
        if (root_label[root] < 0) root_label[root] = next++;
        p.labels[leaf] = root_label[root];
    }
    if (next != k) throw InvariantError("cut produced " + std::to_string(next) + " clusters, expected " + std::to_string(k));
    return p;
}

double silhouette(const DistanceMatrix& d, const Partition& p) {
    const std::size_t n = d.size();
    if (p.k < 2 || static_cast<std::size_t>(p.k) + 1 > n)
        throw InputError("silhouette needs 2 <= k <= n - 1 (k = " + std::to_string(p.k) + ", n = " + std::to_string(n) + ")");
    if (p.ids != d.ids()) throw InputError("partition and distance matrix disagree on question order");

    const auto members = p.clusters();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto own = static_cast<std::size_t>(p.labels[i]);
        if (members[own].size() == 1) continue;
        std::vector<double> mean(members.size(), 0.0);
        for (std::size_t c = 0; c < members.size(); ++c) {
            for (std::size_t j : members[c]) mean[c] += d.at(i, j);
        }
        const double a = mean[own] / static_cast<double>(members[own].size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < members.size(); ++c) {
            if (c != own) b = std::min(b, mean[c] / static_cast<double>(members[c].size()));
        }
        const double denom = std::max(a, b);
        if (denom > 0.0) total += (b - a) / denom;
    }
    return total / static_cast<double>(n);
}

int select_k(const DistanceMatrix& d, int k_min, int k_max) {
    const auto n = static_cast<int>(d.size());
    if (k_min < 2 || k_min > k_max || k_max > n - 1)
        throw InputError("k range [" + std::to_string(k_min) + ", " + std::to_string(k_max) +
                         "] infeasible: needs 2 <= k_min <= k_max <= n - 1 = " + std::to_string(n - 1));
    const auto dend = agglomerate(d);
    int best_k = k_min;
    double best = -std::numeric_limits<double>::infinity();
    for (int k = k_min; k <= k_max; ++k) {
        double s = silhouette(d, cut(dend, k));
        if (s > best) { best = s; best_k = k; }
    }
    return best_k;
}

KCModel to_kc_model(const Partition& p, const QuestionBank& bank, const DistanceMatrix& d, std::string name) {
    if (p.ids != d.ids()) throw InputError("partition and distance matrix disagree on question order");
    KCModel model;
    model.name = std::move(name);
    for (const auto& members : p.clusters()) {
        std::size_t medoid = members.front();
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i : members) {
            double total = 0.0;
            for (std::size_t j : members) total += d.at(i, j);
            if (total < best || (total == best && p.ids[i] < p.ids[medoid])) { best = total; medoid = i; }
        }
        const std::string label = "kc_" + p.ids[medoid];
        for (std::size_t i : members) model.assignment[p.ids[i]] = {label};
    }
    auto missing = uncovered_questions(model, bank);
    if (!missing.empty()) throw InputError("partition does not cover bank question '" + missing.front() + "'");
    if (model.assignment.size() != bank.size()) throw InputError("partition labels questions outside the bank");
    return model;
}

std::string format_dendrogram(const Dendrogram& dend) {
    std::string out = "# leaves=";
    for (std::size_t i = 0; i < dend.leaves.size(); ++i) {
        if (i) out += ',';
        out += dend.leaves[i];
    }
    out += '\n';
    for (const auto& m : dend.merges) {
        out += std::to_string(m.a) + ' ' + std::to_string(m.b) + ' ' + io::format_g17(m.height) + ' ' +
               std::to_string(m.new_id) + '\n';
    }
    return out;
}

Dendrogram parse_dendrogram(std::string_view text) {
    static constexpr std::string_view kPrefix = "# leaves=";
    if (text.substr(0, kPrefix.size()) != kPrefix) throw ParseError("dendrogram line 1: missing '# leaves='");
    Dendrogram dend;
    std::istringstream in{std::string(text)};
    std::string line;
    std::getline(in, line);
    std::string leaves = line.substr(kPrefix.size());
    std::size_t start = 0;
    while (start <= leaves.size() && !leaves.empty()) {
        auto comma = leaves.find(',', start);
        dend.leaves.push_back(leaves.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string a, b, h, id, extra;
        if (!(fields >> a >> b >> h >> id) || (fields >> extra))
            throw ParseError("dendrogram line " + std::to_string(line_no) + ": expected 'a b height new_id'");
        const std::string where = "dendrogram line " + std::to_string(line_no);
        dend.merges.push_back({static_cast<int>(io::parse_int(a, where)), static_cast<int>(io::parse_int(b, where)),
                               io::parse_double(h, where), static_cast<int>(io::parse_int(id, where))});
    }
    return dend;
}

void save_dendrogram(const Dendrogram& dend, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_dendrogram(dend));
}

} // namespace kcforge
