#include "kcforge/congruity.hpp"

#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

namespace kcforge {

namespace {

struct Unconditional {
    double logprob = 0.0;
    std::int64_t tokens = 0;
};

Unconditional score_unconditional(const Question& q, const std::string& text, Scorer& scorer) {
    auto r = scorer.score({"", text});
    if (r.token_count <= 0)
        throw DegenerateQuestionError("question '" + q.id + "' scores to zero tokens");
    return {r.logprob, r.token_count};
}

double pmi_given(const Question& context, const std::string& context_text, const std::string& target_text,
                 const Unconditional& target, Scorer& scorer, const CongruityOptions& opts) {
    auto cond = scorer.score({context_text + opts.separator, target_text});
    if (cond.token_count != target.tokens) {
        spdlog::debug("token count mismatch for target after '{}': conditional {} vs unconditional {}",
                      context.id, cond.token_count, target.tokens);
    }
    return (cond.logprob - target.logprob) / static_cast<double>(target.tokens);
}

} // namespace

double directed_pmi(const Question& context, const Question& target, Scorer& scorer,
                    const CongruityOptions& opts) {
    const auto target_text = canonical_text(target);
    auto uncond = score_unconditional(target, target_text, scorer);
    return pmi_given(context, canonical_text(context), target_text, uncond, scorer, opts);
}

CongruityMatrix::CongruityMatrix(std::vector<std::string> ids, std::string scorer_model_id, std::string separator)
    : ids_(std::move(ids)), model_id_(std::move(scorer_model_id)), separator_(std::move(separator)),
      values_(ids_.size() * ids_.size(), std::numeric_limits<double>::quiet_NaN()) {}

void CongruityMatrix::set(std::size_t i, std::size_t j, double v) {
    if (i == j) throw InvariantError("congruity diagonal is undefined");
    values_[i * ids_.size() + j] = v;
    values_[j * ids_.size() + i] = v;
}

bool operator==(const CongruityMatrix& a, const CongruityMatrix& b) {
    if (a.ids_ != b.ids_ || a.model_id_ != b.model_id_ || a.separator_ != b.separator_) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < a.size(); ++j)
            if (i != j && a.at(i, j) != b.at(i, j)) return false;
    return true;
}

CongruityMatrix congruity_matrix(const QuestionBank& bank, Scorer& scorer, const CongruityOptions& opts) {
    const std::size_t n = bank.size();
    if (n < 2) throw InputError("congruity needs at least 2 questions, bank has " + std::to_string(n));

    std::vector<std::string> texts;
    texts.reserve(n);
    for (const auto& q : bank) texts.push_back(canonical_text(q));

    const std::size_t workers = std::max<std::size_t>(1, std::min(opts.parallelism, scorer.parallelism()));

    // Runs `task(k)` for k in [0, count) on up to `workers` threads; the
    // first exception (lowest k) wins.
    auto run = [workers](std::size_t count, auto&& task) {
        std::atomic<std::size_t> next{0};
        std::mutex err_mutex;
        std::size_t err_index = count;
        std::exception_ptr err;
        auto loop = [&] {
            for (std::size_t k = next.fetch_add(1); k < count; k = next.fetch_add(1)) {
                try {
                    task(k);
                } catch (...) {
                    std::lock_guard lock(err_mutex);
                    if (k < err_index) { err_index = k; err = std::current_exception(); }
                }
            }
        };
        const std::size_t spawn = std::min(workers, count);
        std::vector<std::thread> pool;
        for (std::size_t t = 1; t < spawn; ++t) pool.emplace_back(loop);
        loop();
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    };

    std::vector<Unconditional> uncond(n);
    run(n, [&](std::size_t k) { uncond[k] = score_unconditional(bank[k], texts[k], scorer); });

    // directed[i * n + j] = pmi of j given i
    std::vector<double> directed(n * n, 0.0);
    const std::size_t pairs = n * (n - 1);
    run(pairs, [&](std::size_t k) {
        std::size_t i = k / (n - 1);
        std::size_t j = k % (n - 1);
        if (j >= i) ++j;
        try {
            directed[i * n + j] = pmi_given(bank[i], texts[i], texts[j], uncond[j], scorer, opts);
        } catch (const TransportError& e) {
            throw TransportError("pair (" + bank[i].id + ", " + bank[j].id + "): " + e.what());
        } catch (const ProtocolError& e) {
            throw ProtocolError("pair (" + bank[i].id + ", " + bank[j].id + "): " + e.what());
        }
    });

    CongruityMatrix m(bank.ids(), scorer.model_id(), opts.separator);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) m.set(i, j, (directed[i * n + j] + directed[j * n + i]) / 2.0);
    }
    return m;
}

std::string format_congruity_csv(const CongruityMatrix& m) {
    std::string out = "# model_id=" + m.scorer_model_id() + " sep=" + io::escape_text(m.separator()) + "\n";
    std::vector<std::string> header{"id"};
    header.insert(header.end(), m.ids().begin(), m.ids().end());
    out += io::csv_join(header) + "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::vector<std::string> row{m.ids()[i]};
        for (std::size_t j = 0; j < m.size(); ++j) row.push_back(i == j ? std::string() : io::format_g17(m.at(i, j)));
        out += io::csv_join(row) + "\n";
    }
    return out;
}

CongruityMatrix parse_congruity_csv(std::string_view text) {
    static constexpr std::string_view kPrefix = "# model_id=";
    if (text.substr(0, kPrefix.size()) != kPrefix) throw ParseError("congruity matrix line 1: missing '# model_id=' comment");
    auto eol = text.find('\n');
    std::string_view meta = text.substr(kPrefix.size(), eol == std::string_view::npos ? text.npos : eol - kPrefix.size());
    if (!meta.empty() && meta.back() == '\r') meta.remove_suffix(1);
    auto sep_at = meta.rfind(" sep=");
    if (sep_at == std::string_view::npos) throw ParseError("congruity matrix line 1: missing 'sep='");
    std::string model_id(meta.substr(0, sep_at));
    std::string separator = io::unescape_text(meta.substr(sep_at + 5));

    auto records = io::csv_parse(eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1));
    if (records.empty() || records[0].fields.empty() || records[0].fields[0] != "id")
        throw ParseError("congruity matrix line 2: header must start with 'id'");
    std::vector<std::string> ids(records[0].fields.begin() + 1, records[0].fields.end());
    const std::size_t n = ids.size();
    if (n < 2) throw ParseError("congruity matrix needs at least 2 questions");
    for (const auto& id : ids) validate_question_id(id);
    if (records.size() != n + 1)
        throw ParseError("congruity matrix: expected " + std::to_string(n) + " rows, got " +
                         std::to_string(records.size() - 1));

    CongruityMatrix m(ids, model_id, separator);
    std::vector<double> raw(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = records[i + 1];
        const std::string where = "congruity matrix line " + std::to_string(rec.line + 1);
        if (rec.fields.size() != n + 1) throw ParseError(where + ": expected " + std::to_string(n + 1) + " fields");
        if (rec.fields[0] != ids[i]) throw ParseError(where + ": row id '" + rec.fields[0] + "' != column id '" + ids[i] + "'");
        for (std::size_t j = 0; j < n; ++j) {
            const auto& cell = rec.fields[j + 1];
            if (i == j) {
                if (!cell.empty()) throw ParseError(where + ": diagonal cell must be empty");
                continue;
            }
            raw[i * n + j] = io::parse_double(cell, where);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (raw[i * n + j] != raw[j * n + i] && !(std::isnan(raw[i * n + j]) && std::isnan(raw[j * n + i])))
                throw ParseError("congruity matrix not symmetric at (" + ids[i] + ", " + ids[j] + ")");
            m.set(i, j, raw[i * n + j]);
        }
    }
    return m;
}

void save_congruity_csv(const CongruityMatrix& m, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_congruity_csv(m));
}

CongruityMatrix load_congruity_csv(const std::filesystem::path& path) {
    try {
        return parse_congruity_csv(io::read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

} // namespace kcforge
