#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kcforge {

// ─── Questions ────────────────────────────────────────────────
// A question id is used as a CSV cell and inside cache keys, so it may not
// contain whitespace or commas.

struct Question {
    std::string id;
    std::string stem;
    std::vector<std::string> options;           // may be empty (non-MCQ items)
    std::map<std::string, std::string> meta;    // free-form; never rendered

    friend bool operator==(const Question&, const Question&) = default;
};

/// Throws InputError when `id` is empty or contains whitespace/commas.
void validate_question_id(std::string_view id);

/// Text fed to the scorer: the stem, then one "<LETTER>. <option>" line per
/// option (A..Z, AA, AB, ...), joined by '\n', no trailing newline.
std::string canonical_text(const Question& q);

/// Bijective base-26 option letter: 0 -> "A", 25 -> "Z", 26 -> "AA".
std::string option_letter(std::size_t index);

class QuestionBank {
public:
    QuestionBank() = default;
    /// Validates every question and id uniqueness; throws InputError.
    explicit QuestionBank(std::vector<Question> questions);

    std::size_t size() const noexcept { return questions_.size(); }
    bool empty() const noexcept { return questions_.empty(); }
    const Question& operator[](std::size_t i) const { return questions_[i]; }
    const std::vector<Question>& questions() const noexcept { return questions_; }
    auto begin() const noexcept { return questions_.begin(); }
    auto end() const noexcept { return questions_.end(); }

    bool contains(std::string_view id) const;
    /// Position of `id` in file order; throws InputError if absent.
    std::size_t index_of(std::string_view id) const;
    std::vector<std::string> ids() const;

    friend bool operator==(const QuestionBank& a, const QuestionBank& b) {
        return a.questions_ == b.questions_;
    }

private:
    std::vector<Question> questions_;
    std::unordered_map<std::string, std::size_t> index_;
};

QuestionBank parse_question_bank(std::string_view json_text);
QuestionBank load_question_bank(const std::filesystem::path& path);
std::string format_question_bank(const QuestionBank& bank);
void save_question_bank(const QuestionBank& bank, const std::filesystem::path& path);

// ─── KC models ────────────────────────────────────────────────

struct KCModel {
    std::string name;
    std::map<std::string, std::set<std::string>> assignment;   // question id -> labels

    /// Sorted distinct labels.
    std::vector<std::string> labels() const;
    std::size_t n_kcs() const { return labels().size(); }

    friend bool operator==(const KCModel&, const KCModel&) = default;
};

/// Parses `question_id,kc_label` CSV. Every id must exist in `bank` and
/// every bank question must be covered; missing ids are listed in the error.
KCModel parse_kc_model(std::string_view csv_text, const QuestionBank& bank, std::string name);
/// Model name defaults to the file stem.
KCModel load_kc_model(const std::filesystem::path& path, const QuestionBank& bank);
std::string format_kc_model(const KCModel& model);
void save_kc_model(const KCModel& model, const std::filesystem::path& path);

/// Ids of `bank` questions that `model` does not label, in bank order.
std::vector<std::string> uncovered_questions(const KCModel& model, const QuestionBank& bank);

// ─── Student-step logs ────────────────────────────────────────

struct StudentStep {
    std::string student_id;
    std::string question_id;
    std::int64_t position = 0;
    int correct = 0;   // first-attempt correctness, 0 or 1

    friend bool operator==(const StudentStep&, const StudentStep&) = default;
};

class StepLog {
public:
    StepLog() = default;
    /// Validates domain and per-student strict position increase; throws InputError.
    explicit StepLog(std::vector<StudentStep> rows);

    std::size_t size() const noexcept { return rows_.size(); }
    bool empty() const noexcept { return rows_.empty(); }
    const StudentStep& operator[](std::size_t i) const { return rows_[i]; }
    const std::vector<StudentStep>& rows() const noexcept { return rows_; }

    /// Keyed by id (sorted); values are row indices in file order.
    const std::map<std::string, std::vector<std::size_t>>& student_index() const noexcept {
        return student_index_;
    }
    const std::map<std::string, std::vector<std::size_t>>& question_index() const noexcept {
        return question_index_;
    }

    friend bool operator==(const StepLog& a, const StepLog& b) { return a.rows_ == b.rows_; }

private:
    std::vector<StudentStep> rows_;
    std::map<std::string, std::vector<std::size_t>> student_index_;
    std::map<std::string, std::vector<std::size_t>> question_index_;
};

StepLog parse_step_log(std::string_view csv_text);
StepLog load_step_log(const std::filesystem::path& path);
std::string format_step_log(const StepLog& log);
void save_step_log(const StepLog& log, const std::filesystem::path& path);

} // namespace kcforge
