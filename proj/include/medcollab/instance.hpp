#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "medcollab/errors.hpp"

namespace medcollab {

// One benchmark item: question text, labeled options, optional context, gold answer.
struct QuestionInstance {
    std::string id;
    std::string dataset;  // "MedQA", "MedMCQA", "PubMedQA", "MMLU_<subtask>"
    std::string question;
    std::optional<std::string> context;  // PubMedQA abstracts only
    std::vector<std::pair<std::string, std::string>> options;  // label -> text, ordered
    std::string gold;

    bool has_label(const std::string& label) const {
        for (const auto& [l, _] : options)
            if (l == label) return true;
        return false;
    }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        out.reserve(options.size());
        for (const auto& [l, _] : options) out.push_back(l);
        return out;
    }

    void validate() const {
        if (id.empty()) throw SchemaViolation("instance has empty id");
        if (question.empty()) throw SchemaViolation(id + ": empty question");
        if (options.size() < 2) throw SchemaViolation(id + ": fewer than 2 options");
        if (!has_label(gold)) throw SchemaViolation(id + ": gold answer '" + gold + "' not among option labels");
    }
};

// "A. text\nB. text..." -- word labels (PubMedQA yes/no/maybe) render as the bare label.
inline std::string render_options_block(const QuestionInstance& inst) {
    std::string out;
    for (const auto& [label, text] : inst.options) {
        if (!out.empty()) out += "\n";
        if (label == text)
            out += label;
        else
            out += label + ". " + text;
    }
    return out;
}

// Every prompt slot that takes the question gets the context prepended for PubMedQA.
inline std::string question_with_context(const QuestionInstance& inst) {
    if (inst.context && !inst.context->empty())
        return "Context: " + *inst.context + "\n\nQuestion: " + inst.question;
    return inst.question;
}

}  // namespace medcollab
