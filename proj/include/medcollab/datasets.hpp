#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "medcollab/errors.hpp"
#include "medcollab/instance.hpp"

namespace medcollab {

struct DatasetManifest {
    std::string dataset;  // "MedQA", "MedMCQA", "PubMedQA", "MMLU_anatomy", ...
    std::filesystem::path path;
    std::string format;  // "medqa_jsonl" | "medmcqa_jsonl" | "pubmedqa_jsonl" | "mmlu_csv"
    std::optional<int> expected_size;

    static DatasetManifest from_json(const nlohmann::json& j) {
        DatasetManifest m;
        m.dataset = j.at("dataset").get<std::string>();
        m.path = j.at("path").get<std::string>();
        m.format = j.at("format").get<std::string>();
        if (j.contains("expected_size") && !j.at("expected_size").is_null())
            m.expected_size = j.at("expected_size").get<int>();
        return m;
    }
};

struct LoadReport {
    std::vector<QuestionInstance> instances;
    std::vector<std::string> errors;    // one entry per malformed record, never silently dropped
    std::vector<std::string> warnings;  // e.g. expected-size mismatch
};

namespace detail {

inline std::string option_label(int index) {
    return std::string(1, static_cast<char>('A' + index));
}

// Minimal RFC-4180 row parser (quoted fields, embedded commas and newlines).
inline std::optional<std::vector<std::string>> read_csv_row(std::istream& in) {
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    int c;
    while ((c = in.get()) != EOF) {
        any = true;
        const char ch = static_cast<char>(c);
        if (in_quotes) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    field += '"';
                    in.get();
                } else {
                    in_quotes = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"') {
            in_quotes = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (ch == '\n') {
            if (!field.empty() && field.back() == '\r') field.pop_back();
            fields.push_back(std::move(field));
            return fields;
        } else {
            field += ch;
        }
    }
    if (!any) return std::nullopt;
    if (!field.empty() && field.back() == '\r') field.pop_back();
    fields.push_back(std::move(field));
    return fields;
}

inline QuestionInstance medqa_record(const nlohmann::json& j, const std::string& id,
                                     const std::string& dataset) {
    QuestionInstance inst;
    inst.id = id;
    inst.dataset = dataset;
    inst.question = j.at("question").get<std::string>();
    if (!j.contains("options") || !j.at("options").is_object())
        throw SchemaViolation(id + ": missing options object");
    std::vector<std::string> labels;
    for (const auto& [label, _] : j.at("options").items()) labels.push_back(label);
    std::sort(labels.begin(), labels.end());
    for (const auto& label : labels)
        inst.options.emplace_back(label, j.at("options").at(label).get<std::string>());
    if (j.contains("answer_idx"))
        inst.gold = j.at("answer_idx").get<std::string>();
    else if (j.contains("answer")) {
        const std::string answer_text = j.at("answer").get<std::string>();
        for (const auto& [label, text] : inst.options)
            if (text == answer_text) inst.gold = label;
    }
    if (inst.gold.empty()) throw SchemaViolation(id + ": missing gold answer");
    inst.validate();
    return inst;
}

inline QuestionInstance medmcqa_record(const nlohmann::json& j, const std::string& fallback_id,
                                       const std::string& dataset) {
    QuestionInstance inst;
    inst.id = j.contains("id") ? j.at("id").get<std::string>() : fallback_id;
    inst.dataset = dataset;
    inst.question = j.at("question").get<std::string>();
    const char* keys[] = {"opa", "opb", "opc", "opd"};
    for (int i = 0; i < 4; ++i) {
        if (!j.contains(keys[i])) throw SchemaViolation(inst.id + ": missing option " + keys[i]);
        inst.options.emplace_back(option_label(i), j.at(keys[i]).get<std::string>());
    }
    if (!j.contains("cop")) throw SchemaViolation(inst.id + ": missing gold answer (cop)");
    const int cop = j.at("cop").get<int>();  // 0-indexed, HuggingFace convention
    if (cop < 0 || cop > 3) throw SchemaViolation(inst.id + ": cop out of range");
    inst.gold = option_label(cop);
    inst.validate();
    return inst;
}

inline QuestionInstance pubmedqa_record(const nlohmann::json& j, const std::string& fallback_id) {
    QuestionInstance inst;
    inst.dataset = "PubMedQA";
    auto get = [&](const char* upper, const char* lower_key) -> const nlohmann::json* {
        if (j.contains(upper)) return &j.at(upper);
        if (j.contains(lower_key)) return &j.at(lower_key);
        return nullptr;
    };
    if (const auto* id = get("id", "pubid"))
        inst.id = id->is_string() ? id->get<std::string>() : std::to_string(id->get<long long>());
    else
        inst.id = fallback_id;
    const auto* q = get("QUESTION", "question");
    if (!q) throw SchemaViolation(inst.id + ": missing question");
    inst.question = q->get<std::string>();
    if (const auto* ctx = get("CONTEXTS", "contexts")) {
        std::string joined;
        for (const auto& piece : *ctx) {
            if (!joined.empty()) joined += "\n";
            joined += piece.get<std::string>();
        }
        inst.context = joined;
    } else if (const auto* ctx1 = get("CONTEXT", "context")) {
        inst.context = ctx1->get<std::string>();
    }
    if (!inst.context) throw SchemaViolation(inst.id + ": missing context");
    for (const char* label : {"yes", "no", "maybe"}) inst.options.emplace_back(label, label);
    const auto* decision = get("final_decision", "final_decision");
    if (!decision) throw SchemaViolation(inst.id + ": missing gold answer (final_decision)");
    inst.gold = decision->get<std::string>();
    inst.validate();
    return inst;
}

// Header-less MMLU CSV: question, 4 choices, answer (letter or 0-based index).
inline QuestionInstance mmlu_record(const std::vector<std::string>& row, const std::string& id,
                                    const std::string& dataset) {
    if (row.size() < 6) throw SchemaViolation(id + ": expected 6 columns, got " + std::to_string(row.size()));
    QuestionInstance inst;
    inst.id = id;
    inst.dataset = dataset;
    inst.question = row[0];
    for (int i = 0; i < 4; ++i) inst.options.emplace_back(option_label(i), row[1 + static_cast<std::size_t>(i)]);
    const std::string& answer = row[5];
    if (answer.size() == 1 && answer[0] >= 'A' && answer[0] <= 'D')
        inst.gold = answer;
    else if (answer.size() == 1 && answer[0] >= '0' && answer[0] <= '3')
        inst.gold = option_label(answer[0] - '0');
    else
        throw SchemaViolation(id + ": unrecognized answer '" + answer + "'");
    inst.validate();
    return inst;
}

}  // namespace detail

inline LoadReport load_dataset(const DatasetManifest& manifest) {
    if (!std::filesystem::exists(manifest.path))
        throw Error("dataset file not found: " + manifest.path.string());

    LoadReport report;
    std::ifstream in(manifest.path);
    if (manifest.format == "mmlu_csv") {
        int row_index = 0;
        while (auto row = detail::read_csv_row(in)) {
            if (row->size() == 1 && (*row)[0].empty()) continue;  // blank line
            const std::string id = manifest.dataset + "-" + std::to_string(row_index);
            try {
                report.instances.push_back(detail::mmlu_record(*row, id, manifest.dataset));
            } catch (const SchemaViolation& e) {
                report.errors.push_back(e.what());
            }
            ++row_index;
        }
    } else if (manifest.format == "medqa_jsonl" || manifest.format == "medmcqa_jsonl" ||
               manifest.format == "pubmedqa_jsonl") {
        std::string line;
        int line_index = 0;
        while (std::getline(in, line)) {
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            const std::string id = manifest.dataset + "-" + std::to_string(line_index);
            ++line_index;
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                report.errors.push_back(id + ": invalid JSON");
                continue;
            }
            try {
                if (manifest.format == "medqa_jsonl")
                    report.instances.push_back(detail::medqa_record(j, id, manifest.dataset));
                else if (manifest.format == "medmcqa_jsonl")
                    report.instances.push_back(detail::medmcqa_record(j, id, manifest.dataset));
                else
                    report.instances.push_back(detail::pubmedqa_record(j, id));
            } catch (const SchemaViolation& e) {
                report.errors.push_back(e.what());
            } catch (const nlohmann::json::exception& e) {
                report.errors.push_back(id + ": " + e.what());
            }
        }
    } else {
        throw UnknownFormat("unsupported dataset format: " + manifest.format);
    }

    if (manifest.expected_size && static_cast<int>(report.instances.size()) != *manifest.expected_size)
        report.warnings.push_back(manifest.dataset + ": expected " +
                                  std::to_string(*manifest.expected_size) + " instances, loaded " +
                                  std::to_string(report.instances.size()));
    return report;
}

// Uniform sample without replacement; deterministic for a fixed seed; output keeps
// the population's relative order.
inline std::vector<QuestionInstance> sample(const std::vector<QuestionInstance>& instances,
                                            std::size_t count, std::uint64_t seed) {
    if (count > instances.size())
        throw CountExceedsPopulation("requested " + std::to_string(count) + " of " +
                                     std::to_string(instances.size()) + " instances");
    std::vector<std::size_t> indices(instances.size());
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::mt19937_64 rng(seed);
    // partial Fisher-Yates: the first `count` slots become the sample
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, indices.size() - 1);
        std::swap(indices[i], indices[pick(rng)]);
    }
    indices.resize(count);
    std::sort(indices.begin(), indices.end());
    std::vector<QuestionInstance> out;
    out.reserve(count);
    for (std::size_t i : indices) out.push_back(instances[i]);
    return out;
}

}  // namespace medcollab
