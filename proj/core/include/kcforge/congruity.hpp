#pragma once

#include "kcforge/corpus.hpp"
#include "kcforge/scorer.hpp"

#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace kcforge {

struct CongruityOptions {
    /// Appended to the context question's text before scoring the target.
    std::string separator = "\n\n";
    /// Upper bound on concurrent score() calls; the scorer's own bound also applies.
    std::size_t parallelism = 1;
};

/// Length-normalized PMI of `target` given `context`:
///   (L(target | context + sep) - L(target)) / N(target)
/// where L is the scorer logprob and N the unconditional token count.
/// Positive when the context question makes the target more likely.
double directed_pmi(const Question& context, const Question& target, Scorer& scorer,
                    const CongruityOptions& opts = {});

/// Symmetric question-by-question congruity; the diagonal is not defined.
class CongruityMatrix {
public:
    CongruityMatrix() = default;
    CongruityMatrix(std::vector<std::string> ids, std::string scorer_model_id, std::string separator);

    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const std::string& scorer_model_id() const noexcept { return model_id_; }
    const std::string& separator() const noexcept { return separator_; }

    /// Off-diagonal value; NaN on the diagonal.
    double at(std::size_t i, std::size_t j) const { return values_[i * ids_.size() + j]; }
    /// Sets both (i, j) and (j, i).
    void set(std::size_t i, std::size_t j, double v);

    /// Same ids, metadata and off-diagonal values.
    friend bool operator==(const CongruityMatrix& a, const CongruityMatrix& b);

private:
    std::vector<std::string> ids_;
    std::string model_id_;
    std::string separator_;
    std::vector<double> values_;
};

/// c(i, j) = (directed_pmi(i, j) + directed_pmi(j, i)) / 2 over bank order.
/// Issues exactly n unconditional and n(n-1) conditional score calls.
CongruityMatrix congruity_matrix(const QuestionBank& bank, Scorer& scorer, const CongruityOptions& opts = {});

// CSV persistence:
//   # model_id=<id> sep=<escaped separator>
//   id,<id_1>,...,<id_n>
//   <id_i>,<c(i,1)>,...       (empty diagonal cell, %.17g values)
std::string format_congruity_csv(const CongruityMatrix& m);
CongruityMatrix parse_congruity_csv(std::string_view text);
void save_congruity_csv(const CongruityMatrix& m, const std::filesystem::path& path);
CongruityMatrix load_congruity_csv(const std::filesystem::path& path);

} // namespace kcforge
