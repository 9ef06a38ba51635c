#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "medcollab/errors.hpp"
#include "medcollab/instance.hpp"

namespace medcollab {

// Every LLM call in the pipeline carries exactly one stage.
enum class Stage {
    GatherQuestionDomains,
    GatherOptionDomains,
    QuestionAnalysis,
    OptionAnalysis,
    ReportSummarization,
    ReportModification,
    Vote,
    DecisionMaking,
};

inline constexpr std::array<Stage, 8> kAllStages = {
    Stage::GatherQuestionDomains, Stage::GatherOptionDomains, Stage::QuestionAnalysis,
    Stage::OptionAnalysis,        Stage::ReportSummarization, Stage::ReportModification,
    Stage::Vote,                  Stage::DecisionMaking,
};

inline std::string stage_tag(Stage stage) {
    switch (stage) {
        case Stage::GatherQuestionDomains: return "qd";
        case Stage::GatherOptionDomains: return "od";
        case Stage::QuestionAnalysis: return "qa";
        case Stage::OptionAnalysis: return "oa";
        case Stage::ReportSummarization: return "rs";
        case Stage::ReportModification: return "mod";
        case Stage::Vote: return "vote";
        case Stage::DecisionMaking: return "dm";
    }
    return "?";
}

inline Stage stage_from_tag(const std::string& tag) {
    for (Stage s : kAllStages)
        if (stage_tag(s) == tag) return s;
    throw Error("unknown stage tag: " + tag);
}

struct PromptContext {
    std::string question;
    std::string options_block;  // "A. text\nB. text..."
    std::optional<std::string> question_domain;
    std::optional<std::string> option_domain;
    std::optional<std::string> question_analyses_block;
    std::optional<std::string> reports_block;
    std::optional<std::string> advice;
    std::optional<std::string> advice_domain;
    std::string expert_count_phrase = "five";  // number word for the stage's expert-count slot
};

struct RenderedCall {
    std::string system_text;
    std::string user_text;
    Stage stage;
};

inline std::string english_count_word(int n) {
    static constexpr std::array<std::string_view, 13> words = {
        "zero", "one", "two",   "three", "four", "five",  "six",
        "seven", "eight", "nine", "ten",  "eleven", "twelve"};
    if (n >= 0 && n < static_cast<int>(words.size())) return std::string(words[n]);
    return std::to_string(n);
}

namespace detail {

inline void replace_all(std::string& text, std::string_view marker, const std::string& value) {
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        text.replace(pos, marker.size(), value);
        pos += value.size();
    }
}

inline const std::string& require(const std::optional<std::string>& field, const char* name,
                                  Stage stage) {
    if (!field) throw MissingContextField(std::string(name) + " required for stage " + stage_tag(stage));
    return *field;
}

inline void check_resolved(const std::string& text, Stage stage) {
    static constexpr std::array<std::string_view, 9> markers = {
        "{question}",       "{options}", "{question_domain}", "{option_domain}",
        "{question_analyses}", "{reports}", "{advice}",        "{advice_domain}",
        "{count}"};
    for (auto marker : markers)
        if (text.find(marker) != std::string::npos)
            throw UnresolvedPlaceholder("unresolved " + std::string(marker) + " in stage " +
                                        stage_tag(stage));
}

}  // namespace detail

namespace templates {

inline constexpr std::string_view kRoleGatherQuestion =
    "You are a medical expert who specializes in categorizing a specific medical scenario into "
    "specific areas of medicine.";

inline constexpr std::string_view kRoleGatherOption =
    "As a medical expert, you possess the ability to discern the two most relevant fields of "
    "expertise needed to address a multiple-choice question encapsulating a specific medical "
    "context.";

inline constexpr std::string_view kRoleQuestionAnalysis =
    "You are a medical expert in the domain of {question_domain}. From your domain, your goal is to "
    "scrutinize and diagnose the symptoms presented by patients in specific medical scenarios.";

inline constexpr std::string_view kRoleOptionAnalysis =
    "You are a medical expert specialized in the domain {option_domain}. You are adept at "
    "comprehending the nexus between questions and choices in multiple-choice exams and determining "
    "their validity. Your task is to analyze individual options with your expert medical knowledge "
    "and evaluate their relevancy and correctness.";

inline constexpr std::string_view kRoleReportSummarization =
    "You are a medical report assistant who excels at summarizing and synthesizing.";

inline constexpr std::string_view kRoleDecisionMaking =
    "You are a medical decision maker skilled in making decisions based on summarized reports.";

// Authored: the consultation stage needs a voter persona with the expert's own domain.
inline constexpr std::string_view kRoleVote =
    "You are a medical expert in the domain of {question_domain}. You are taking part in a "
    "collaborative consultation and must judge whether the summarized report below is accurate and "
    "complete from the perspective of your domain.";

inline constexpr std::string_view kPromptGatherQuestion =
    "You need to complete the following steps: 1. Carefully read the medical scenario presented in "
    "the question: {question}. 2. Based on the medical scenario in it, classify the question into "
    "{count} different subfields of medicine. 3. You should output in exactly the same format as: "
    "Medical Field: | .";

inline constexpr std::string_view kPromptGatherOption =
    "You need to complete the following steps: 1. 1. Carefully read the medical scenario presented "
    "in the question: {question}. 2. The available options are: {options}. Strive to understand the "
    "fundamental connections between the question and the options. 3. Your core aim should be to "
    "categorize the options into {count} distinct subfields of medicine. You should output in "
    "exactly the same format as: Medical Field: | .";

inline constexpr std::string_view kPromptQuestionAnalysis =
    "Please meticulously examine the medical scenario outlined in this question: {question}. "
    "Drawing upon your medical expertise, interpret the condition being depicted. Subsequently, "
    "identify and highlight the aspects of the issue that you find most alarming or noteworthy.";

inline constexpr std::string_view kPromptOptionAnalysis =
    "Regarding the question: {question}, we procured the analysis of {count} experts from diverse "
    "domains. {question_analyses} The following are the options available: {options}. Reviewing the "
    "question's analysis from the expert team, you're required to fathom the connection between the "
    "options and the question from the perspective of your respective domain, and scrutinize each "
    "option individually to assess whether it is plausible or should be eliminated based on reason "
    "and logic. Pay close attention to discerning the disparities among the different options and "
    "rationalize their existence. A handful of these options might seem right on the first glance "
    "but could potentially be misleading in reality.";

inline constexpr std::string_view kPromptReportSummarization =
    "Here are some reports from different medical domain experts. You need to complete the "
    "following steps: 1. Take careful and comprehensive consideration of the following reports. 2. "
    "Extract key knowledge from the following reports. 3. Derive the comprehensive and summarized "
    "analysis based on the knowledge. 4. Your ultimate goal is to derive a refined and synthesized "
    "report based on the following reports. You should output in exactly the same format as: Key "
    "Knowledge:; Total Analysis:\n\n{reports}";

inline constexpr std::string_view kPromptReportModification =
    "Here is advice from a medical expert specialized in {advice_domain}: {advice}. Based on the "
    "above advice, output the revised analysis in exactly the same format as: Key Knowledge:; Total "
    "Analysis:";

// Authored: explicit reply format makes the yes/no votes machine-readable.
inline constexpr std::string_view kPromptVote =
    "Here is the current summarized report for a medical question under review.\n\nQuestion: "
    "{question}\nOptions: {options}\n\nReport:\n{reports}\n\nReview the report carefully from your "
    "domain. If you fully agree with the report, reply in exactly the format: Vote: yes. If you "
    "disagree, reply in exactly the format:\nVote: no\nAdvice: <your modification opinion>";

// Authored: matches the explicit-format style of the staged templates above.
inline constexpr std::string_view kPromptDecisionMaking =
    "Question: {question}\nOptions: {options}\n\nHere is the final summarized report from the "
    "expert team:\n{reports}\n\nBased on the report, output your final answer in exactly the "
    "format: Answer: <option letter>";

}  // namespace templates

// Role string for the stage, with the expert domain substituted where applicable.
inline std::string render_role(Stage stage, const PromptContext& ctx) {
    std::string text;
    switch (stage) {
        case Stage::GatherQuestionDomains: text = templates::kRoleGatherQuestion; break;
        case Stage::GatherOptionDomains: text = templates::kRoleGatherOption; break;
        case Stage::QuestionAnalysis:
            text = templates::kRoleQuestionAnalysis;
            detail::replace_all(text, "{question_domain}",
                                detail::require(ctx.question_domain, "question_domain", stage));
            break;
        case Stage::OptionAnalysis:
            text = templates::kRoleOptionAnalysis;
            detail::replace_all(text, "{option_domain}",
                                detail::require(ctx.option_domain, "option_domain", stage));
            break;
        case Stage::ReportSummarization:
        case Stage::ReportModification: text = templates::kRoleReportSummarization; break;
        case Stage::Vote: {
            text = templates::kRoleVote;
            const std::optional<std::string>& domain =
                ctx.question_domain ? ctx.question_domain : ctx.option_domain;
            detail::replace_all(text, "{question_domain}",
                                detail::require(domain, "question_domain or option_domain", stage));
            break;
        }
        case Stage::DecisionMaking: text = templates::kRoleDecisionMaking; break;
    }
    detail::check_resolved(text, stage);
    return text;
}

inline std::string render_prompt(Stage stage, const PromptContext& ctx) {
    std::string text;
    switch (stage) {
        case Stage::GatherQuestionDomains:
            text = templates::kPromptGatherQuestion;
            detail::replace_all(text, "{count}", ctx.expert_count_phrase);
            detail::replace_all(text, "{question}", ctx.question);
            break;
        case Stage::GatherOptionDomains:
            text = templates::kPromptGatherOption;
            detail::replace_all(text, "{count}", ctx.expert_count_phrase);
            detail::replace_all(text, "{question}", ctx.question);
            detail::replace_all(text, "{options}", ctx.options_block);
            break;
        case Stage::QuestionAnalysis:
            text = templates::kPromptQuestionAnalysis;
            detail::replace_all(text, "{question}", ctx.question);
            break;
        case Stage::OptionAnalysis:
            text = templates::kPromptOptionAnalysis;
            detail::replace_all(text, "{count}", ctx.expert_count_phrase);
            detail::replace_all(text, "{question}", ctx.question);
            detail::replace_all(
                text, "{question_analyses}",
                detail::require(ctx.question_analyses_block, "question_analyses_block", stage));
            detail::replace_all(text, "{options}", ctx.options_block);
            break;
        case Stage::ReportSummarization:
            text = templates::kPromptReportSummarization;
            detail::replace_all(text, "{reports}",
                                detail::require(ctx.reports_block, "reports_block", stage));
            break;
        case Stage::ReportModification:
            text = templates::kPromptReportModification;
            detail::replace_all(text, "{advice_domain}",
                                detail::require(ctx.advice_domain, "advice_domain", stage));
            detail::replace_all(text, "{advice}", detail::require(ctx.advice, "advice", stage));
            // The report under revision travels ahead of the fixed instruction text.
            if (ctx.reports_block) text = *ctx.reports_block + "\n\n" + text;
            break;
        case Stage::Vote:
            text = templates::kPromptVote;
            detail::replace_all(text, "{question}", ctx.question);
            detail::replace_all(text, "{options}", ctx.options_block);
            detail::replace_all(text, "{reports}",
                                detail::require(ctx.reports_block, "reports_block", stage));
            break;
        case Stage::DecisionMaking:
            text = templates::kPromptDecisionMaking;
            detail::replace_all(text, "{question}", ctx.question);
            detail::replace_all(text, "{options}", ctx.options_block);
            detail::replace_all(text, "{reports}",
                                detail::require(ctx.reports_block, "reports_block", stage));
            break;
    }
    detail::check_resolved(text, stage);
    return text;
}

enum class BaselineMode { zero_shot, zero_shot_cot };

// Single-call baselines with our own minimal prompt text.
inline RenderedCall render_baseline_prompt(BaselineMode mode, const QuestionInstance& inst) {
    RenderedCall call;
    call.stage = Stage::DecisionMaking;
    call.system_text = "You are a medical expert answering multiple-choice questions.";
    std::string user = "Question: " + question_with_context(inst) + "\n\nOptions:\n" +
                       render_options_block(inst) + "\n\n";
    if (mode == BaselineMode::zero_shot_cot) user += "Let's think step by step. ";
    user += "Output your final answer in exactly the format: Answer: <option letter>";
    call.user_text = user;
    return call;
}

}  // namespace medcollab
