#include "kcforge/corpus.hpp"

#include "kcforge/errors.hpp"
#include "kcforge/io.hpp"

#include <algorithm>
#include <cctype>

#include <nlohmann/json.hpp>

namespace kcforge {

namespace {

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (const auto& id : ids) {
        if (!out.empty()) out += ", ";
        out += id;
    }
    return out;
}

} // namespace

void validate_question_id(std::string_view id) {
    if (id.empty()) throw InputError("empty question id");
    for (unsigned char c : id) {
        if (std::isspace(c) || c == ',')
            throw InputError("question id '" + std::string(id) + "' contains whitespace or a comma");
    }
}

std::string option_letter(std::size_t index) {
    std::string out;
    std::size_t n = index + 1;
    while (n > 0) {
        --n;
        out.insert(out.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return out;
}

std::string canonical_text(const Question& q) {
    std::string out = q.stem;
    for (std::size_t i = 0; i < q.options.size(); ++i) {
        out += '\n';
        out += option_letter(i);
        out += ". ";
        out += q.options[i];
    }
    return out;
}

// ─── QuestionBank ─────────────────────────────────────────────

QuestionBank::QuestionBank(std::vector<Question> questions) : questions_(std::move(questions)) {
    index_.reserve(questions_.size());
    for (std::size_t i = 0; i < questions_.size(); ++i) {
        const auto& q = questions_[i];
        const std::string where = "question #" + std::to_string(i + 1);
        try {
            validate_question_id(q.id);
        } catch (const InputError& e) {
            throw InputError(where + ": " + e.what());
        }
        if (is_blank(q.stem)) throw InputError(where + " ('" + q.id + "'): empty stem");
        if (!index_.emplace(q.id, i).second) throw InputError("duplicate question id '" + q.id + "'");
    }
}

bool QuestionBank::contains(std::string_view id) const {
    return index_.find(std::string(id)) != index_.end();
}

std::size_t QuestionBank::index_of(std::string_view id) const {
    auto it = index_.find(std::string(id));
    if (it == index_.end()) throw InputError("unknown question id '" + std::string(id) + "'");
    return it->second;
}

std::vector<std::string> QuestionBank::ids() const {
    std::vector<std::string> out;
    out.reserve(questions_.size());
    for (const auto& q : questions_) out.push_back(q.id);
    return out;
}

QuestionBank parse_question_bank(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("question bank: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("questions") || !doc["questions"].is_array())
        throw ParseError("question bank: expected an object with a 'questions' list");

    std::vector<Question> questions;
    std::size_t record = 0;
    for (const auto& item : doc["questions"]) {
        ++record;
        const std::string where = "question bank record #" + std::to_string(record);
        if (!item.is_object()) throw ParseError(where + ": not an object");
        for (const auto& [key, _] : item.items()) {
            if (key != "id" && key != "stem" && key != "options" && key != "meta")
                throw ParseError(where + ": unknown field '" + key + "'");
        }
        Question q;
        try {
            q.id = item.at("id").get<std::string>();
            q.stem = item.at("stem").get<std::string>();
            if (item.contains("options")) q.options = item["options"].get<std::vector<std::string>>();
            if (item.contains("meta")) q.meta = item["meta"].get<std::map<std::string, std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(where + ": " + e.what());
        }
        questions.push_back(std::move(q));
    }
    try {
        return QuestionBank(std::move(questions));
    } catch (const ParseError&) {
        throw;
    } catch (const InputError& e) {
        throw ParseError(std::string("question bank: ") + e.what());
    }
}

QuestionBank load_question_bank(const std::filesystem::path& path) {
    try {
        return parse_question_bank(io::read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_question_bank(const QuestionBank& bank) {
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& q : bank) {
        nlohmann::ordered_json item;
        item["id"] = q.id;
        item["stem"] = q.stem;
        if (!q.options.empty()) item["options"] = q.options;
        if (!q.meta.empty()) item["meta"] = q.meta;
        list.push_back(std::move(item));
    }
    nlohmann::ordered_json doc;
    doc["questions"] = std::move(list);
    return doc.dump(2) + "\n";
}

void save_question_bank(const QuestionBank& bank, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_question_bank(bank));
}

// ─── KCModel ──────────────────────────────────────────────────

std::vector<std::string> KCModel::labels() const {
    std::set<std::string> all;
    for (const auto& [_, labs] : assignment) all.insert(labs.begin(), labs.end());
    return {all.begin(), all.end()};
}

std::vector<std::string> uncovered_questions(const KCModel& model, const QuestionBank& bank) {
    std::vector<std::string> missing;
    for (const auto& q : bank) {
        auto it = model.assignment.find(q.id);
        if (it == model.assignment.end() || it->second.empty()) missing.push_back(q.id);
    }
    return missing;
}

KCModel parse_kc_model(std::string_view csv_text, const QuestionBank& bank, std::string name) {
    auto records = io::csv_parse(csv_text);
    if (records.empty() || records.front().fields != std::vector<std::string>{"question_id", "kc_label"})
        throw ParseError("KC model '" + name + "': header must be 'question_id,kc_label'");

    KCModel model;
    model.name = std::move(name);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::string where = "KC model '" + model.name + "' line " + std::to_string(rec.line);
        if (rec.fields.size() != 2) throw ParseError(where + ": expected 2 fields");
        const auto& qid = rec.fields[0];
        const auto& label = rec.fields[1];
        if (!bank.contains(qid)) throw ParseError(where + ": unknown question id '" + qid + "'");
        if (label.empty()) throw ParseError(where + ": empty KC label for '" + qid + "'");
        model.assignment[qid].insert(label);
    }
    auto missing = uncovered_questions(model, bank);
    if (!missing.empty())
        throw InputError("KC model '" + model.name + "' does not label: [" + join_ids(missing) + "]");
    return model;
}

KCModel load_kc_model(const std::filesystem::path& path, const QuestionBank& bank) {
    return parse_kc_model(io::read_file(path), bank, path.stem().string());
}

std::string format_kc_model(const KCModel& model) {
    std::string out = "question_id,kc_label\n";
    for (const auto& [qid, labels] : model.assignment) {
        for (const auto& label : labels) out += io::csv_join({qid, label}) + "\n";
    }
    return out;
}

void save_kc_model(const KCModel& model, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_kc_model(model));
}

// ─── StepLog ──────────────────────────────────────────────────

StepLog::StepLog(std::vector<StudentStep> rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        const auto& row = rows_[i];
        const std::string where = "step row " + std::to_string(i + 1);
        if (row.student_id.empty()) throw InputError(where + ": empty student id");
        validate_question_id(row.question_id);
        if (row.position < 0) throw InputError(where + ": negative position");
        if (row.correct != 0 && row.correct != 1) throw InputError(where + ": correct must be 0 or 1");

        auto& mine = student_index_[row.student_id];
        if (!mine.empty()) {
            auto prev = rows_[mine.back()].position;
            if (row.position == prev)
                throw InputError("student '" + row.student_id + "': duplicate position " +
                                 std::to_string(row.position));
            if (row.position < prev)
                throw InputError("student '" + row.student_id + "': positions not increasing (" +
                                 std::to_string(prev) + " then " + std::to_string(row.position) + ")");
        }
        mine.push_back(i);
        question_index_[row.question_id].push_back(i);
    }
}

StepLog parse_step_log(std::string_view csv_text) {
    static const std::vector<std::string> kHeader{"student_id", "question_id", "position", "correct"};
    auto records = io::csv_parse(csv_text);
    if (records.empty()) throw ParseError("step log: missing header");
    if (records.front().fields != kHeader)
        throw ParseError("step log: header must be 'student_id,question_id,position,correct', got '" +
                         io::csv_join(records.front().fields) + "'");

    std::vector<StudentStep> rows;
    rows.reserve(records.size() - 1);
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::string where = "step log line " + std::to_string(rec.line);
        if (rec.fields.size() != 4) throw ParseError(where + ": expected 4 fields");
        StudentStep step;
        step.student_id = rec.fields[0];
        step.question_id = rec.fields[1];
        step.position = io::parse_int(rec.fields[2], where + " position");
        if (rec.fields[3] != "0" && rec.fields[3] != "1")
            throw ParseError(where + ": correct must be 0 or 1, got '" + rec.fields[3] + "'");
        step.correct = rec.fields[3] == "1" ? 1 : 0;
        rows.push_back(std::move(step));
    }
    try {
        return StepLog(std::move(rows));
    } catch (const ParseError&) {
        throw;
    } catch (const InputError& e) {
        throw ParseError(std::string("step log: ") + e.what());
    }
}

StepLog load_step_log(const std::filesystem::path& path) {
    try {
        return parse_step_log(io::read_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

std::string format_step_log(const StepLog& log) {
    std::string out = "student_id,question_id,position,correct\n";
    for (const auto& row : log.rows()) {
        out += io::csv_join({row.student_id, row.question_id, std::to_string(row.position),
                             std::to_string(row.correct)});
        out += '\n';
    }
    return out;
}

void save_step_log(const StepLog& log, const std::filesystem::path& path) {
    io::write_file_atomic(path, format_step_log(log));
}

} // namespace kcforge
