#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "medcollab/datasets.hpp"
#include "medcollab/errors.hpp"
#include "medcollab/gateway.hpp"
#include "medcollab/pipeline.hpp"

namespace medcollab {

enum class ModeKind { mc, zero_shot, zero_shot_cot, self_consistency };

struct RunMode {
    ModeKind kind = ModeKind::mc;
    int sc_samples = 5;  // self_consistency only; base mode is zero-shot CoT

    void validate() const {
        if (kind == ModeKind::self_consistency && sc_samples < 1)
            throw Error("RunMode: sc_samples must be >= 1");
    }
};

inline std::string to_string(ModeKind kind) {
    switch (kind) {
        case ModeKind::mc: return "mc";
        case ModeKind::zero_shot: return "zs";
        case ModeKind::zero_shot_cot: return "zs-cot";
        case ModeKind::self_consistency: return "sc";
    }
    return "?";
}

inline ModeKind mode_from_string(const std::string& s) {
    if (s == "mc") return ModeKind::mc;
    if (s == "zs") return ModeKind::zero_shot;
    if (s == "zs-cot") return ModeKind::zero_shot_cot;
    if (s == "sc") return ModeKind::self_consistency;
    throw Error("unknown mode: " + s);
}

struct InstanceRecord {
    std::string id;
    std::optional<std::string> predicted;
    std::string gold;
    bool correct = false;
    std::optional<std::string> failure;
};

struct RunResult {
    std::vector<InstanceRecord> records;  // input order
    RunMode mode;
    MCConfig config;
    std::int64_t started_ms = 0;
    std::int64_t finished_ms = 0;
};

inline double accuracy(const RunResult& result) {
    if (result.records.empty()) throw Error("accuracy: no records");
    std::size_t correct = 0;
    for (const auto& r : result.records) correct += r.correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(result.records.size());
}

// Most frequent label; ties go to the label that appeared earliest in the list.
inline std::string majority_vote(const std::vector<std::string>& answers) {
    if (answers.empty()) throw Error("majority_vote: empty answer list");
    std::string best;
    std::size_t best_count = 0;
    for (std::size_t i = 0; i < answers.size(); ++i) {
        bool seen = false;
        for (std::size_t j = 0; j < i; ++j) seen = seen || answers[j] == answers[i];
        if (seen) continue;
        std::size_t count = 0;
        for (const auto& a : answers) count += a == answers[i] ? 1 : 0;
        if (count > best_count) {
            best = answers[i];
            best_count = count;
        }
    }
    return best;
}

using TranscriptSink = std::function<void(const std::string& instance_id, const Transcript&)>;

namespace detail {

inline std::string answer_one(const QuestionInstance& inst, const RunMode& mode,
                              const MCConfig& config, Gateway& gateway,
                              const TranscriptSink& sink) {
    if (mode.kind == ModeKind::mc) {
        Transcript t = run_mc(inst, config, gateway);
        if (sink) sink(inst.id, t);
        return t.answer->label;
    }

    const BaselineMode base = mode.kind == ModeKind::zero_shot ? BaselineMode::zero_shot
                                                               : BaselineMode::zero_shot_cot;
    RenderedCall call = render_baseline_prompt(base, inst);
    ChatRequest req;
    req.system_text = call.system_text;
    req.user_text = call.user_text;
    req.model_id = config.model_id;
    req.temperature = config.temperature;
    req.top_p = config.top_p;
    req.max_tokens = config.max_tokens_long;
    req.request_tag = to_string(mode.kind == ModeKind::self_consistency ? ModeKind::zero_shot_cot
                                                                        : mode.kind);
    const auto labels = inst.labels();
    const int samples = mode.kind == ModeKind::self_consistency ? mode.sc_samples : 1;
    std::vector<std::string> answers;
    for (int i = 0; i < samples; ++i) {
        ChatResponse resp = gateway.complete(req);
        answers.push_back(parse_answer(resp.text, labels).label);
    }
    return majority_vote(answers);
}

}  // namespace detail

// Runs every instance through the chosen mode. Per-instance failures are recorded
// and count as incorrect; the run keeps going.
inline RunResult run_eval(const std::vector<QuestionInstance>& instances, const RunMode& mode,
                          const MCConfig& config, Gateway& gateway, int jobs = 1,
                          const TranscriptSink& sink = {}) {
    if (instances.empty()) throw Error("run_eval: no instances");
    mode.validate();
    config.validate();

    RunResult result;
    result.mode = mode;
    result.config = config;
    result.started_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::system_clock::now().time_since_epoch())
                            .count();
    result.records.resize(instances.size());

    auto evaluate = [&](std::size_t i) {
        const QuestionInstance& inst = instances[i];
        InstanceRecord rec;
        rec.id = inst.id;
        rec.gold = inst.gold;
        try {
            rec.predicted = detail::answer_one(inst, mode, config, gateway, sink);
            rec.correct = *rec.predicted == inst.gold;
        } catch (const StageFailed& e) {
            rec.failure = e.what();
            if (sink) sink(inst.id, e.transcript);
        } catch (const BackendUnreachable&) {
            throw;  // fatal for the whole run, not just this instance
        } catch (const AuthMissing&) {
            throw;
        } catch (const Error& e) {
            rec.failure = e.what();
        }
        result.records[i] = std::move(rec);
    };

    if (jobs <= 1) {
        for (std::size_t i = 0; i < instances.size(); ++i) evaluate(i);
    } else {
        std::vector<std::future<void>> futures;
        std::atomic<std::size_t> next{0};
        for (int w = 0; w < jobs; ++w)
            futures.push_back(std::async(std::launch::async, [&] {
                for (std::size_t i = next++; i < instances.size(); i = next++) evaluate(i);
            }));
        for (auto& f : futures) f.get();
    }

    result.finished_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
    return result;
}

// One run_eval per question-agent count, identical instances throughout.
inline std::vector<std::pair<int, double>> agent_sweep(
    const std::vector<QuestionInstance>& instances, int m_from, int m_to, int fixed_n,
    MCConfig config, Gateway& gateway, int jobs = 1, const TranscriptSink& sink = {}) {
    if (m_from < 1 || m_to < m_from) throw Error("agent_sweep: invalid m range");
    std::vector<std::pair<int, double>> table;
    for (int m = m_from; m <= m_to; ++m) {
        config.question_experts = m;
        config.option_experts = fixed_n;
        RunResult result = run_eval(instances, RunMode{ModeKind::mc}, config, gateway, jobs, sink);
        table.emplace_back(m, accuracy(result));
    }
    return table;
}

// ---- error taxonomy ----

enum class ErrorCategory {
    LackOfDomainKnowledge,
    MisretrievalOfDomainKnowledge,
    ConsistencyError,
    CoTError,
};

inline constexpr std::array<ErrorCategory, 4> kAllErrorCategories = {
    ErrorCategory::LackOfDomainKnowledge,
    ErrorCategory::MisretrievalOfDomainKnowledge,
    ErrorCategory::ConsistencyError,
    ErrorCategory::CoTError,
};

inline std::string to_string(ErrorCategory c) {
    switch (c) {
        case ErrorCategory::LackOfDomainKnowledge: return "LackOfDomainKnowledge";
        case ErrorCategory::MisretrievalOfDomainKnowledge: return "MisretrievalOfDomainKnowledge";
        case ErrorCategory::ConsistencyError: return "ConsistencyError";
        case ErrorCategory::CoTError: return "CoTError";
    }
    return "?";
}

inline ErrorCategory error_category_from_string(const std::string& s) {
    for (ErrorCategory c : kAllErrorCategories)
        if (to_string(c) == s) return c;
    throw Error("unknown error category: " + s);
}

struct ErrorAnnotation {
    std::string instance_id;
    ErrorCategory category;
    std::string note;
};

// CSV with header `id,category,note`.
inline std::vector<ErrorAnnotation> load_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("annotation file not found: " + path.string());
    std::vector<ErrorAnnotation> out;
    bool first = true;
    while (auto row = detail::read_csv_row(in)) {
        if (row->size() == 1 && (*row)[0].empty()) continue;
        if (first) {
            first = false;
            if (!row->empty() && (*row)[0] == "id") continue;  // header
        }
        if (row->size() < 2) throw Error(path.string() + ": annotation row needs id,category");
        ErrorAnnotation a;
        a.instance_id = (*row)[0];
        a.category = error_category_from_string((*row)[1]);
        if (row->size() > 2) a.note = (*row)[2];
        out.push_back(std::move(a));
    }
    return out;
}

inline std::map<ErrorCategory, double> error_breakdown(const std::vector<ErrorAnnotation>& annotations) {
    if (annotations.empty()) throw Error("error_breakdown: no annotations");
    std::map<ErrorCategory, double> ratios;
    for (ErrorCategory c : kAllErrorCategories) ratios[c] = 0.0;
    for (const auto& a : annotations) ratios[a.category] += 1.0;
    for (auto& [_, v] : ratios) v /= static_cast<double>(annotations.size());
    return ratios;
}

// ---- result export ----

inline nlohmann::json to_json(const RunResult& result) {
    nlohmann::json j;
    j["mode"] = to_string(result.mode.kind);
    if (result.mode.kind == ModeKind::self_consistency) j["sc_samples"] = result.mode.sc_samples;
    j["config"] = {{"question_experts", result.config.question_experts},
                   {"option_experts", result.config.option_experts},
                   {"max_rounds", result.config.max_rounds},
                   {"model_id", result.config.model_id},
                   {"temperature", result.config.temperature},
                   {"top_p", result.config.top_p}};
    j["started_ms"] = result.started_ms;
    j["finished_ms"] = result.finished_ms;
    j["accuracy"] = accuracy(result);
    j["records"] = nlohmann::json::array();
    for (const auto& r : result.records) {
        nlohmann::json rec = {{"id", r.id}, {"gold", r.gold}, {"correct", r.correct}};
        if (r.predicted) rec["predicted"] = *r.predicted;
        if (r.failure) rec["failure"] = *r.failure;
        j["records"].push_back(std::move(rec));
    }
    return j;
}

inline std::string to_csv(const RunResult& result) {
    auto quote = [](const std::string& s) {
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string out = "\"";
        for (char c : s) {
            if (c == '"') out += '"';
            out += c;
        }
        out += '"';
        return out;
    };
    std::ostringstream os;
    os << "id,mode,predicted,gold,correct,failure\n";
    for (const auto& r : result.records)
        os << quote(r.id) << ',' << to_string(result.mode.kind) << ','
           << quote(r.predicted.value_or("")) << ',' << quote(r.gold) << ','
           << (r.correct ? "true" : "false") << ',' << quote(r.failure.value_or("")) << '\n';
    return os.str();
}

}  // namespace medcollab
