#pragma once

#include <chrono>
#include <functional>
#include <future>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "medcollab/errors.hpp"
#include "medcollab/gateway.hpp"
#include "medcollab/instance.hpp"
#include "medcollab/parse.hpp"
#include "medcollab/prompts.hpp"

namespace medcollab {

struct MCConfig {
    int question_experts = 5;  // m; 4 for the MedMCQA preset
    int option_experts = 2;    // n
    int max_rounds = 5;
    int parse_repair_retries = 1;
    bool parallel_fanout = false;
    std::string model_id = "gpt-4";
    double temperature = 1.0;
    double top_p = 1.0;
    int max_tokens_long = 1024;   // analyses, reports
    int max_tokens_short = 256;   // gathering, voting, decision

    void validate() const {
        if (question_experts < 1) throw Error("MCConfig: question_experts must be positive");
        if (option_experts < 1) throw Error("MCConfig: option_experts must be positive");
        if (max_rounds < 1) throw Error("MCConfig: max_rounds must be >= 1");
        if (parse_repair_retries < 0) throw Error("MCConfig: parse_repair_retries must be nonnegative");
    }
};

struct ChatExchange {
    std::string tag;
    std::string system_text;
    std::string user_text;
    std::string model_id;
    double temperature = 1.0;
    double top_p = 1.0;
    int max_tokens = 0;
    std::string response_text;
    std::string finish_reason = "stop";
    std::int64_t latency_ms = 0;
    int attempt_count = 1;
    std::int64_t timestamp_ms = 0;
};

struct ExpertPanel {
    DomainList question_experts;
    DomainList option_experts;
};

struct AnalysisSet {
    std::vector<std::pair<std::string, std::string>> question_analyses;  // (domain, text)
    std::vector<std::pair<std::string, std::string>> option_analyses;
};

struct ConsultationRound {
    int round_index = 0;  // 1-based
    std::vector<std::pair<std::string, ParsedVote>> votes;  // (domain, vote), panel order
    ParsedReport report_before;
    ParsedReport report_after;
};

inline constexpr int kTranscriptSchemaVersion = 1;

struct Transcript {
    std::string instance_id;
    MCConfig config;
    ExpertPanel panel;
    AnalysisSet analyses;
    ParsedReport initial_report;
    std::vector<ConsultationRound> rounds;
    bool consensus_reached = false;
    ParsedReport final_report;
    std::optional<AnswerChoice> answer;
    std::vector<ChatExchange> exchanges;
    std::vector<std::string> warnings;
};

// Pipeline stage failure carrying everything recorded up to the failure point.
struct StageFailed : Error {
    Transcript transcript;
    StageFailed(const std::string& msg, Transcript t) : Error(msg), transcript(std::move(t)) {}
};

// ---- transcript JSON ----

inline nlohmann::json to_json(const ParsedReport& r) {
    return {{"key_knowledge", r.key_knowledge}, {"total_analysis", r.total_analysis}, {"revision", r.revision}};
}

inline ParsedReport report_from_json(const nlohmann::json& j) {
    return ParsedReport{j.at("key_knowledge"), j.at("total_analysis"), j.at("revision")};
}

inline nlohmann::json to_json(const Transcript& t) {
    nlohmann::json j;
    j["schema_version"] = kTranscriptSchemaVersion;
    j["instance_id"] = t.instance_id;
    j["config"] = {{"question_experts", t.config.question_experts},
                   {"option_experts", t.config.option_experts},
                   {"max_rounds", t.config.max_rounds},
                   {"parse_repair_retries", t.config.parse_repair_retries},
                   {"parallel_fanout", t.config.parallel_fanout},
                   {"model_id", t.config.model_id},
                   {"temperature", t.config.temperature},
                   {"top_p", t.config.top_p}};
    j["panel"] = {{"question_experts", t.panel.question_experts.domains},
                  {"option_experts", t.panel.option_experts.domains}};
    auto analyses_json = [](const std::vector<std::pair<std::string, std::string>>& v) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [domain, text] : v) arr.push_back({{"domain", domain}, {"text", text}});
        return arr;
    };
    j["analyses"] = {{"question", analyses_json(t.analyses.question_analyses)},
                     {"option", analyses_json(t.analyses.option_analyses)}};
    j["initial_report"] = to_json(t.initial_report);
    j["rounds"] = nlohmann::json::array();
    for (const auto& round : t.rounds) {
        nlohmann::json votes = nlohmann::json::array();
        for (const auto& [domain, vote] : round.votes) {
            nlohmann::json v = {{"domain", domain}, {"agree", vote.agree}};
            if (vote.advice) v["advice"] = *vote.advice;
            votes.push_back(std::move(v));
        }
        j["rounds"].push_back({{"round_index", round.round_index},
                               {"votes", std::move(votes)},
                               {"report_before", to_json(round.report_before)},
                               {"report_after", to_json(round.report_after)}});
    }
    j["consensus_reached"] = t.consensus_reached;
    j["final_report"] = to_json(t.final_report);
    if (t.answer) j["answer"] = t.answer->label;
    j["exchanges"] = nlohmann::json::array();
    for (const auto& e : t.exchanges)
        j["exchanges"].push_back({{"tag", e.tag},
                                  {"system_text", e.system_text},
                                  {"user_text", e.user_text},
                                  {"model_id", e.model_id},
                                  {"temperature", e.temperature},
                                  {"top_p", e.top_p},
                                  {"max_tokens", e.max_tokens},
                                  {"response_text", e.response_text},
                                  {"finish_reason", e.finish_reason},
                                  {"latency_ms", e.latency_ms},
                                  {"attempt_count", e.attempt_count},
                                  {"timestamp_ms", e.timestamp_ms}});
    j["warnings"] = t.warnings;
    return j;
}

inline Transcript transcript_from_json(const nlohmann::json& j) {
    const int version = j.value("schema_version", -1);
    if (version != kTranscriptSchemaVersion)
        throw SchemaVersionUnsupported("transcript schema_version " + std::to_string(version) +
                                       " unsupported (expected " +
                                       std::to_string(kTranscriptSchemaVersion) + ")");
    Transcript t;
    t.instance_id = j.at("instance_id");
    const auto& c = j.at("config");
    t.config.question_experts = c.at("question_experts");
    t.config.option_experts = c.at("option_experts");
    t.config.max_rounds = c.at("max_rounds");
    t.config.parse_repair_retries = c.at("parse_repair_retries");
    t.config.parallel_fanout = c.at("parallel_fanout");
    t.config.model_id = c.at("model_id");
    t.config.temperature = c.at("temperature");
    t.config.top_p = c.at("top_p");
    t.panel.question_experts.domains = j.at("panel").at("question_experts").get<std::vector<std::string>>();
    t.panel.option_experts.domains = j.at("panel").at("option_experts").get<std::vector<std::string>>();
    for (const auto& a : j.at("analyses").at("question"))
        t.analyses.question_analyses.emplace_back(a.at("domain"), a.at("text"));
    for (const auto& a : j.at("analyses").at("option"))
        t.analyses.option_analyses.emplace_back(a.at("domain"), a.at("text"));
    t.initial_report = report_from_json(j.at("initial_report"));
    for (const auto& r : j.at("rounds")) {
        ConsultationRound round;
        round.round_index = r.at("round_index");
        for (const auto& v : r.at("votes")) {
            ParsedVote vote;
            vote.agree = v.at("agree");
            if (v.contains("advice")) vote.advice = v.at("advice").get<std::string>();
            round.votes.emplace_back(v.at("domain"), std::move(vote));
        }
        round.report_before = report_from_json(r.at("report_before"));
        round.report_after = report_from_json(r.at("report_after"));
        t.rounds.push_back(std::move(round));
    }
    t.consensus_reached = j.at("consensus_reached");
    t.final_report = report_from_json(j.at("final_report"));
    if (j.contains("answer")) t.answer = AnswerChoice{j.at("answer").get<std::string>()};
    for (const auto& e : j.at("exchanges")) {
        ChatExchange ex;
        ex.tag = e.at("tag");
        ex.system_text = e.at("system_text");
        ex.user_text = e.at("user_text");
        ex.model_id = e.at("model_id");
        ex.temperature = e.at("temperature");
        ex.top_p = e.at("top_p");
        ex.max_tokens = e.at("max_tokens");
        ex.response_text = e.at("response_text");
        ex.finish_reason = e.at("finish_reason");
        ex.latency_ms = e.at("latency_ms");
        ex.attempt_count = e.at("attempt_count");
        ex.timestamp_ms = e.at("timestamp_ms");
        t.exchanges.push_back(std::move(ex));
    }
    t.warnings = j.at("warnings").get<std::vector<std::string>>();
    return t;
}

// ---- the five-stage run ----

// One MC run over one instance. Owns the transcript; stage methods are public so
// tests can drive them individually.
class PipelineRun {
  public:
    PipelineRun(QuestionInstance instance, MCConfig config, Gateway& gateway)
        : instance_(std::move(instance)), config_(std::move(config)), gateway_(gateway) {
        config_.validate();
        instance_.validate();
        transcript_.instance_id = instance_.id;
        transcript_.config = config_;
    }

    Transcript& transcript() { return transcript_; }

    ExpertPanel gather_experts() {
        PromptContext ctx = base_context();
        ctx.expert_count_phrase = english_count_word(config_.question_experts);
        DomainList qd = gather_one(Stage::GatherQuestionDomains, ctx, config_.question_experts);
        ctx.expert_count_phrase = english_count_word(config_.option_experts);
        DomainList od = gather_one(Stage::GatherOptionDomains, ctx, config_.option_experts);
        transcript_.panel = ExpertPanel{std::move(qd), std::move(od)};
        return transcript_.panel;
    }

    std::vector<std::pair<std::string, std::string>> propose_question_analyses(
        const ExpertPanel& panel) {
        auto out = fan_out(panel.question_experts.domains, [&](const std::string& domain) {
            PromptContext ctx = base_context();
            ctx.question_domain = domain;
            return make_request(Stage::QuestionAnalysis, ctx, config_.max_tokens_long);
        });
        if (out.empty()) fail("all question-analysis calls failed");
        transcript_.analyses.question_analyses = out;
        return out;
    }

    std::vector<std::pair<std::string, std::string>> propose_option_analyses(
        const ExpertPanel& panel,
        const std::vector<std::pair<std::string, std::string>>& question_analyses) {
        if (question_analyses.empty()) fail("option analyses require at least one question analysis");
        std::string block;
        for (const auto& [domain, text] : question_analyses) {
            if (!block.empty()) block += "\n";
            block += "The evaluation from the " + domain + " expert suggests: " + text + ".";
        }
        auto out = fan_out(panel.option_experts.domains, [&](const std::string& domain) {
            PromptContext ctx = base_context();
            ctx.option_domain = domain;
            ctx.question_analyses_block = block;
            ctx.expert_count_phrase = english_count_word(static_cast<int>(question_analyses.size()));
            return make_request(Stage::OptionAnalysis, ctx, config_.max_tokens_long);
        });
        transcript_.analyses.option_analyses = out;
        return out;
    }

    ParsedReport summarize_report(const AnalysisSet& analyses) {
        if (analyses.question_analyses.empty() && analyses.option_analyses.empty())
            fail("nothing to summarize");
        std::string block;
        auto append = [&](const std::vector<std::pair<std::string, std::string>>& list) {
            for (const auto& [domain, text] : list) {
                if (!block.empty()) block += "\n\n";
                block += "Report from the " + domain + " expert:\n" + text;
            }
        };
        append(analyses.question_analyses);
        append(analyses.option_analyses);
        PromptContext ctx = base_context();
        ctx.reports_block = block;
        ChatRequest req = make_request(Stage::ReportSummarization, ctx, config_.max_tokens_long);
        ParsedReport report = call_parsed<ParsedReport>(
            req, report_format_reminder(), [](const std::string& text) { return parse_report(text); });
        report.revision = 0;
        transcript_.initial_report = report;
        return report;
    }

    // Vote-and-revise loop; dissenting advice is applied one expert at a time, in
    // panel order, each revision feeding the next.
    std::tuple<ParsedReport, std::vector<ConsultationRound>, bool> run_consultation(
        const ExpertPanel& panel, ParsedReport report) {
        std::vector<std::string> voters = panel.question_experts.domains;
        voters.insert(voters.end(), panel.option_experts.domains.begin(),
                      panel.option_experts.domains.end());
        bool consensus = false;
        for (int round_index = 1; round_index <= config_.max_rounds; ++round_index) {
            ConsultationRound round;
            round.round_index = round_index;
            round.report_before = report;
            for (const auto& domain : voters) {
                PromptContext ctx = base_context();
                ctx.question_domain = domain;
                ctx.reports_block = render_report_text(report);
                ChatRequest req = make_request(Stage::Vote, ctx, config_.max_tokens_short);
                ParsedVote vote;
                try {
                    vote = call_parsed<ParsedVote>(req, vote_format_reminder(), [](const std::string& t) {
                        return parse_vote(t);
                    });
                } catch (const ParseError&) {
                    vote = ParsedVote{true, std::nullopt};
                    transcript_.warnings.push_back("round " + std::to_string(round_index) +
                                                   ": unparseable vote from " + domain +
                                                   " counted as yes");
                }
                round.votes.emplace_back(domain, std::move(vote));
            }

            bool all_agree = true;
            for (const auto& [_, vote] : round.votes) all_agree = all_agree && vote.agree;
            if (all_agree) {
                round.report_after = report;
                transcript_.rounds.push_back(std::move(round));
                consensus = true;
                break;
            }

            for (const auto& [domain, vote] : round.votes) {
                if (vote.agree) continue;
                PromptContext ctx = base_context();
                ctx.advice_domain = domain;
                ctx.advice = vote.advice.value_or("");
                ctx.reports_block = render_report_text(report);
                ChatRequest req = make_request(Stage::ReportModification, ctx, config_.max_tokens_long);
                ParsedReport revised;
                try {
                    revised = call_parsed<ParsedReport>(req, report_format_reminder(),
                                                        [](const std::string& t) { return parse_report(t); });
                } catch (const ParseError& e) {
                    fail(std::string("report revision unparseable: ") + e.what());
                }
                revised.revision = report.revision + 1;
                report = revised;
            }
            round.report_after = report;
            transcript_.rounds.push_back(std::move(round));
        }
        transcript_.consensus_reached = consensus;
        transcript_.final_report = report;
        return {report, transcript_.rounds, consensus};
    }

    AnswerChoice decide(const ParsedReport& final_report) {
        PromptContext ctx = base_context();
        ctx.reports_block = render_report_text(final_report);
        ChatRequest req = make_request(Stage::DecisionMaking, ctx, config_.max_tokens_short);
        const auto labels = instance_.labels();
        AnswerChoice answer;
        try {
            answer = call_parsed<AnswerChoice>(req, answer_format_reminder(), [&](const std::string& t) {
                return parse_answer(t, labels);
            });
        } catch (const ParseError& e) {
            fail(std::string("final answer unparseable: ") + e.what());
        }
        transcript_.answer = answer;
        return answer;
    }

    Transcript run() {
        ExpertPanel panel = gather_experts();
        propose_question_analyses(panel);
        propose_option_analyses(panel, transcript_.analyses.question_analyses);
        ParsedReport report = summarize_report(transcript_.analyses);
        auto [final_report, rounds, consensus] = run_consultation(panel, report);
        decide(final_report);
        return transcript_;
    }

    static std::string render_report_text(const ParsedReport& report) {
        return "Key Knowledge: " + report.key_knowledge +
               "\nTotal Analysis: " + report.total_analysis;
    }

  private:
    PromptContext base_context() const {
        PromptContext ctx;
        ctx.question = question_with_context(instance_);
        ctx.options_block = render_options_block(instance_);
        return ctx;
    }

    ChatRequest make_request(Stage stage, const PromptContext& ctx, int max_tokens) const {
        ChatRequest req;
        req.system_text = render_role(stage, ctx);
        req.user_text = render_prompt(stage, ctx);
        req.model_id = config_.model_id;
        req.temperature = config_.temperature;
        req.top_p = config_.top_p;
        req.max_tokens = max_tokens;
        req.request_tag = stage_tag(stage);
        return req;
    }

    ChatResponse call(const ChatRequest& req) {
        ChatResponse resp = gateway_.complete(req);
        record(req, resp);
        return resp;
    }

    // Repair retry: re-issue the same request with the required format restated.
    template <typename T, typename Parser>
    T call_parsed(const ChatRequest& req, const std::string& reminder, Parser parser) {
        ChatRequest attempt_req = req;
        for (int attempt = 0;; ++attempt) {
            ChatResponse resp = call(attempt_req);
            try {
                return parser(resp.text);
            } catch (const ParseError&) {
                if (attempt >= config_.parse_repair_retries) throw;
                attempt_req = req;
                attempt_req.user_text += " " + reminder;
            }
        }
    }

    DomainList gather_one(Stage stage, const PromptContext& ctx, int expected) {
        ChatRequest req = make_request(stage, ctx, config_.max_tokens_short);
        DomainList list = call_parsed<DomainList>(req, domain_format_reminder(), [&](const std::string& t) {
            return parse_domain_list(t, expected);
        });
        // Short panel: one padding re-query, then proceed with whatever exists.
        if (static_cast<int>(list.domains.size()) < expected) {
            try {
                ChatResponse resp = call(req);
                DomainList extra = parse_domain_list(resp.text, expected);
                for (auto& d : extra.domains) {
                    bool dup = false;
                    for (const auto& have : list.domains)
                        if (detail::lower(have) == detail::lower(d)) dup = true;
                    if (!dup && static_cast<int>(list.domains.size()) < expected)
                        list.domains.push_back(std::move(d));
                }
            } catch (const ParseError&) {
                // keep the short list
            }
            if (static_cast<int>(list.domains.size()) < expected)
                transcript_.warnings.push_back(stage_tag(stage) + ": only " +
                                               std::to_string(list.domains.size()) + " of " +
                                               std::to_string(expected) + " domains gathered");
        }
        return list;
    }

    // Expert fan-out; with parallel_fanout the calls run concurrently but results
    // (and their transcript exchanges) are assembled in panel order.
    std::vector<std::pair<std::string, std::string>> fan_out(
        const std::vector<std::string>& domains,
        const std::function<ChatRequest(const std::string&)>& make) {
        struct Slot {
            std::optional<ChatResponse> response;
            std::string error;
        };
        std::vector<ChatRequest> requests;
        requests.reserve(domains.size());
        for (const auto& d : domains) requests.push_back(make(d));

        std::vector<Slot> slots(domains.size());
        auto attempt = [&](std::size_t i) {
            try {
                slots[i].response = gateway_.complete(requests[i]);
            } catch (const Error& e) {
                slots[i].error = e.what();
            }
        };
        if (config_.parallel_fanout) {
            std::vector<std::future<void>> futures;
            for (std::size_t i = 0; i < domains.size(); ++i)
                futures.push_back(std::async(std::launch::async, attempt, i));
            for (auto& f : futures) f.get();
        } else {
            for (std::size_t i = 0; i < domains.size(); ++i) attempt(i);
        }

        std::vector<std::pair<std::string, std::string>> out;
        for (std::size_t i = 0; i < domains.size(); ++i) {
            if (slots[i].response) {
                record(requests[i], *slots[i].response);
                if (!slots[i].response->text.empty()) {
                    out.emplace_back(domains[i], slots[i].response->text);
                    continue;
                }
                slots[i].error = "empty analysis";
            }
            transcript_.warnings.push_back("expert '" + domains[i] +
                                           "' dropped: " + slots[i].error);
        }
        return out;
    }

    void record(const ChatRequest& req, const ChatResponse& resp) {
        ChatExchange ex;
        ex.tag = req.request_tag;
        ex.system_text = req.system_text;
        ex.user_text = req.user_text;
        ex.model_id = req.model_id;
        ex.temperature = req.temperature;
        ex.top_p = req.top_p;
        ex.max_tokens = req.max_tokens;
        ex.response_text = resp.text;
        ex.finish_reason = to_string(resp.finish_reason);
        ex.latency_ms = resp.latency_ms;
        ex.attempt_count = resp.attempt_count;
        ex.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                              std::chrono::system_clock::now().time_since_epoch())
                              .count();
        transcript_.exchanges.push_back(std::move(ex));
    }

    [[noreturn]] void fail(const std::string& msg) {
        throw StageFailed(instance_.id + ": " + msg, transcript_);
    }

    static std::string domain_format_reminder() {
        return "Remember: you must output in exactly the same format as: Medical Field: | .";
    }
    static std::string report_format_reminder() {
        return "Remember: you must output in exactly the same format as: Key Knowledge:; Total "
               "Analysis:";
    }
    static std::string vote_format_reminder() {
        return "Remember: reply in exactly the format: Vote: yes, or: Vote: no\nAdvice: <your "
               "modification opinion>";
    }
    static std::string answer_format_reminder() {
        return "Remember: output your final answer in exactly the format: Answer: <option letter>";
    }

    QuestionInstance instance_;
    MCConfig config_;
    Gateway& gateway_;
    Transcript transcript_;
};

inline Transcript run_mc(const QuestionInstance& instance, const MCConfig& config, Gateway& gateway) {
    return PipelineRun(instance, config, gateway).run();
}

}  // namespace medcollab
