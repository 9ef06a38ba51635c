#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <string>

#include "helpers.hpp"
#include "medcollab/prompts.hpp"

using namespace medcollab;
using test_helpers::read_file;
using test_helpers::repo_dir;

namespace {

PromptContext sentinel_context() {
    PromptContext ctx;
    ctx.question = "[QUESTION]";
    ctx.options_block = "[OPTIONS]";
    ctx.question_domain = "[QUESTION_DOMAIN]";
    ctx.option_domain = "[OPTION_DOMAIN]";
    ctx.question_analyses_block =
        "The evaluation from the [QUESTION_DOMAIN] expert suggests: [QUESTION_ANALYSIS].";
    ctx.reports_block = "[REPORTS]";
    ctx.advice = "[ADVICE]";
    ctx.advice_domain = "[ADVICE_DOMAIN]";
    return ctx;
}

std::string golden(const std::string& name) {
    std::string text = read_file(repo_dir() / "prompts" / "golden" / (name + ".txt"));
    if (!text.empty() && text.back() == '\n') text.pop_back();
    return text;
}

}  // namespace

TEST_CASE("role strings match golden transcriptions byte-exactly") {
    PromptContext ctx = sentinel_context();
    REQUIRE(render_role(Stage::GatherQuestionDomains, ctx) == golden("role_qd"));
    REQUIRE(render_role(Stage::GatherOptionDomains, ctx) == golden("role_od"));
    REQUIRE(render_role(Stage::QuestionAnalysis, ctx) == golden("role_qa"));
    REQUIRE(render_role(Stage::OptionAnalysis, ctx) == golden("role_oa"));
    REQUIRE(render_role(Stage::ReportSummarization, ctx) == golden("role_rs"));
    REQUIRE(render_role(Stage::ReportModification, ctx) == golden("role_mod"));
    REQUIRE(render_role(Stage::Vote, ctx) == golden("role_vote"));
    REQUIRE(render_role(Stage::DecisionMaking, ctx) == golden("role_dm"));
}

TEST_CASE("prompt templates match golden transcriptions byte-exactly") {
    PromptContext ctx = sentinel_context();
    ctx.expert_count_phrase = "five";
    REQUIRE(render_prompt(Stage::GatherQuestionDomains, ctx) == golden("prompt_qd"));
    REQUIRE(render_prompt(Stage::QuestionAnalysis, ctx) == golden("prompt_qa"));
    REQUIRE(render_prompt(Stage::OptionAnalysis, ctx) == golden("prompt_oa"));
    REQUIRE(render_prompt(Stage::ReportSummarization, ctx) == golden("prompt_rs"));
    REQUIRE(render_prompt(Stage::Vote, ctx) == golden("prompt_vote"));
    REQUIRE(render_prompt(Stage::DecisionMaking, ctx) == golden("prompt_dm"));

    ctx.expert_count_phrase = "two";
    REQUIRE(render_prompt(Stage::GatherOptionDomains, ctx) == golden("prompt_od"));

    ctx.expert_count_phrase = "four";
    REQUIRE(render_prompt(Stage::OptionAnalysis, ctx) == golden("prompt_oa_four_experts"));

    // the bare revision instruction, without the report prefix
    PromptContext mod_ctx;
    mod_ctx.advice = "[ADVICE]";
    mod_ctx.advice_domain = "[ADVICE_DOMAIN]";
    REQUIRE(render_prompt(Stage::ReportModification, mod_ctx) == golden("prompt_mod"));
}

TEST_CASE("key phrases land where the pipeline expects them") {
    PromptContext ctx;
    ctx.question = "Q";
    ctx.options_block = "A. x\nB. y";
    REQUIRE(render_role(Stage::GatherQuestionDomains, ctx).find(
                "categorizing a specific medical scenario into specific areas of medicine") !=
            std::string::npos);
    ctx.question_domain = "Cardiology";
    REQUIRE(render_role(Stage::QuestionAnalysis, ctx).find(
                "medical expert in the domain of Cardiology") != std::string::npos);
    ctx.option_domain = "Pharmacology";
    REQUIRE(render_role(Stage::OptionAnalysis, ctx).find(
                "specialized in the domain Pharmacology") != std::string::npos);
    REQUIRE(render_role(Stage::DecisionMaking, ctx).find(
                "making decisions based on summarized reports") != std::string::npos);

    std::string p1 = render_prompt(Stage::GatherQuestionDomains, ctx);
    REQUIRE(p1.find("classify the question into five different subfields of medicine") !=
            std::string::npos);
    REQUIRE(p1.find("Q") != std::string::npos);

    ctx.expert_count_phrase = "two";
    REQUIRE(render_prompt(Stage::GatherOptionDomains, ctx).find(
                "categorize the options into two distinct subfields of medicine") !=
            std::string::npos);

    ctx.advice_domain = "Neurology";
    ctx.advice = "T";
    REQUIRE(render_prompt(Stage::ReportModification, ctx).find(
                "Here is advice from a medical expert specialized in Neurology: T") !=
            std::string::npos);
}

TEST_CASE("missing context fields are reported per stage") {
    PromptContext ctx;
    ctx.question = "Q";
    ctx.options_block = "A. x";
    REQUIRE_THROWS_AS(render_role(Stage::QuestionAnalysis, ctx), MissingContextField);
    REQUIRE_THROWS_AS(render_role(Stage::OptionAnalysis, ctx), MissingContextField);
    REQUIRE_THROWS_AS(render_role(Stage::Vote, ctx), MissingContextField);
    REQUIRE_THROWS_AS(render_prompt(Stage::OptionAnalysis, ctx), MissingContextField);
    REQUIRE_THROWS_AS(render_prompt(Stage::ReportSummarization, ctx), MissingContextField);
    REQUIRE_THROWS_AS(render_prompt(Stage::ReportModification, ctx), MissingContextField);
}

TEST_CASE("every stage renders without leftover placeholder markers") {
    PromptContext ctx;
    ctx.question = "Q";
    ctx.options_block = "A. x\nB. y";
    ctx.question_domain = "Cardiology";
    ctx.option_domain = "Pharmacology";
    ctx.question_analyses_block = "QA block";
    ctx.reports_block = "Key Knowledge: K\nTotal Analysis: T";
    ctx.advice = "advice";
    ctx.advice_domain = "Neurology";
    for (Stage stage : kAllStages) {
        const std::string role = render_role(stage, ctx);
        const std::string prompt = render_prompt(stage, ctx);
        REQUIRE_FALSE(role.empty());
        REQUIRE_FALSE(prompt.empty());
        for (const auto& text : {role, prompt}) {
            REQUIRE(text.find("{question}") == std::string::npos);
            REQUIRE(text.find("{options}") == std::string::npos);
            REQUIRE(text.find("{count}") == std::string::npos);
            REQUIRE(text.find("{reports}") == std::string::npos);
            REQUIRE(text.find("{advice}") == std::string::npos);
        }
    }
}

TEST_CASE("baseline prompts") {
    auto inst = test_helpers::medqa_instance();
    auto zs = render_baseline_prompt(BaselineMode::zero_shot, inst);
    for (const char* label : {"A.", "B.", "C.", "D."})
        REQUIRE(zs.user_text.find(label) != std::string::npos);
    REQUIRE(zs.user_text.find("Let's think step by step") == std::string::npos);
    REQUIRE(zs.user_text.find("Answer: <option letter>") != std::string::npos);

    auto cot = render_baseline_prompt(BaselineMode::zero_shot_cot, inst);
    REQUIRE(cot.user_text.find("Let's think step by step") != std::string::npos);
    REQUIRE(cot.user_text.find("Answer: <option letter>") != std::string::npos);
    // CoT elicitation comes before the answer-format instruction
    REQUIRE(cot.user_text.find("Let's think step by step") <
            cot.user_text.find("Answer: <option letter>"));
}

TEST_CASE("baseline prompt carries the PubMedQA context block") {
    auto call = render_baseline_prompt(BaselineMode::zero_shot, test_helpers::pubmedqa_instance());
    REQUIRE(call.user_text.find("Context: ") != std::string::npos);
    REQUIRE(call.user_text.find("maybe") != std::string::npos);
}

TEST_CASE("english count words") {
    REQUIRE(english_count_word(5) == "five");
    REQUIRE(english_count_word(4) == "four");
    REQUIRE(english_count_word(2) == "two");
    REQUIRE(english_count_word(21) == "21");
}
