#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "medcollab/errors.hpp"

namespace medcollab {

struct DomainList {
    std::vector<std::string> domains;  // ordered, trimmed, deduped
};

struct ParsedReport {
    std::string key_knowledge;
    std::string total_analysis;
    int revision = 0;
};

struct ParsedVote {
    bool agree = false;
    std::optional<std::string> advice;  // present iff agree == false
};

struct AnswerChoice {
    std::string label;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

// Drops markdown emphasis so "**Key Knowledge:**" matches its plain header.
inline std::string strip_bold(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '*' && i + 1 < text.size() && text[i + 1] == '*') {
            ++i;
            continue;
        }
        out += text[i];
    }
    return out;
}

inline std::size_t find_ci(const std::string& haystack, const std::string& needle,
                           std::size_t from = 0) {
    const std::string h = lower(haystack), n = lower(needle);
    return h.find(n, from);
}

inline std::string strip_token_punct(std::string_view token) {
    std::size_t begin = 0, end = token.size();
    auto is_punct = [](char c) {
        return c == '.' || c == ',' || c == ':' || c == ';' || c == ')' || c == '(' || c == '"' ||
               c == '\'' || c == '*' || c == '`' || c == '!' || c == '?' || c == '[' || c == ']';
    };
    while (begin < end && is_punct(token[begin])) ++begin;
    while (end > begin && is_punct(token[end - 1])) --end;
    return std::string(token.substr(begin, end - begin));
}

inline std::vector<std::string> tokenize(std::string_view line) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : line) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) tokens.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

}  // namespace detail

// Splits the "Medical Field: A | B | ..." line; falls back to numbered/bulleted lists
// when the delimiter line comes up short. Order preserved, duplicates dropped.
inline DomainList parse_domain_list(const std::string& text, int expected_count) {
    if (expected_count < 1) throw Error("parse_domain_list: expected_count must be >= 1");
    const std::string clean = detail::strip_bold(text);

    DomainList out;
    auto push_unique = [&](std::string domain) {
        domain = detail::trim(domain);
        if (domain.empty()) return;
        for (const auto& d : out.domains)
            if (detail::lower(d) == detail::lower(domain)) return;
        out.domains.push_back(std::move(domain));
    };

    static const std::string header = "Medical Field:";
    for (const auto& line : detail::split_lines(clean)) {
        std::size_t pos = detail::find_ci(line, header);
        if (pos == std::string::npos) continue;
        std::string rest = line.substr(pos + header.size());
        std::size_t start = 0;
        while (start <= rest.size()) {
            std::size_t bar = rest.find('|', start);
            if (bar == std::string::npos) {
                push_unique(rest.substr(start));
                break;
            }
            push_unique(rest.substr(start, bar - start));
            start = bar + 1;
        }
        break;
    }

    if (static_cast<int>(out.domains.size()) < expected_count) {
        for (const auto& line : detail::split_lines(clean)) {
            const std::string trimmed = detail::trim(line);
            if (trimmed.empty()) continue;
            std::size_t body = std::string::npos;
            if (trimmed.size() > 1 && std::isdigit(static_cast<unsigned char>(trimmed[0]))) {
                std::size_t i = 0;
                while (i < trimmed.size() && std::isdigit(static_cast<unsigned char>(trimmed[i]))) ++i;
                if (i < trimmed.size() && (trimmed[i] == '.' || trimmed[i] == ')')) body = i + 1;
            } else if (trimmed[0] == '-' || trimmed[0] == '*') {
                body = 1;
            }
            if (body != std::string::npos) push_unique(trimmed.substr(body));
        }
    }

    if (out.domains.empty()) throw FormatNotFound("no 'Medical Field:' line or list items found");
    if (static_cast<int>(out.domains.size()) > expected_count)
        out.domains.resize(static_cast<std::size_t>(expected_count));
    return out;
}

// Extracts the Key Knowledge / Total Analysis spans, tolerating "; " vs newline
// separators and markdown-bolded headers.
inline ParsedReport parse_report(const std::string& text) {
    const std::string clean = detail::strip_bold(text);
    static const std::string kKey = "Key Knowledge:";
    static const std::string kTotal = "Total Analysis:";

    std::size_t key_pos = detail::find_ci(clean, kKey);
    if (key_pos == std::string::npos) throw FormatNotFound("missing 'Key Knowledge:' header");
    std::size_t total_pos = detail::find_ci(clean, kTotal, key_pos + kKey.size());
    if (total_pos == std::string::npos) throw FormatNotFound("missing 'Total Analysis:' header");

    std::string key = clean.substr(key_pos + kKey.size(), total_pos - key_pos - kKey.size());
    std::string total = clean.substr(total_pos + kTotal.size());
    key = detail::trim(key);
    while (!key.empty() && (key.back() == ';' || key.back() == '\n')) key.pop_back();
    key = detail::trim(key);
    total = detail::trim(total);
    if (key.empty() || total.empty()) throw FormatNotFound("empty report section");
    return ParsedReport{key, total, 0};
}

// "Vote: yes" / "Vote: no\nAdvice: ..." with bare yes/no first tokens as fallback.
inline ParsedVote parse_vote(const std::string& text) {
    const std::string clean = detail::strip_bold(text);
    static const std::string kVote = "Vote:";
    static const std::string kAdvice = "Advice:";

    std::size_t vote_pos = detail::find_ci(clean, kVote);
    std::string verdict;
    std::size_t after_verdict = std::string::npos;
    if (vote_pos != std::string::npos) {
        std::size_t i = vote_pos + kVote.size();
        while (i < clean.size() && std::isspace(static_cast<unsigned char>(clean[i]))) ++i;
        std::size_t j = i;
        while (j < clean.size() && std::isalpha(static_cast<unsigned char>(clean[j]))) ++j;
        verdict = detail::lower(clean.substr(i, j - i));
        after_verdict = j;
    } else {
        auto tokens = detail::tokenize(clean);
        if (!tokens.empty()) {
            const std::string first = detail::lower(detail::strip_token_punct(tokens.front()));
            if (first == "yes" || first == "no") {
                verdict = first;
                after_verdict = clean.size();
            }
        }
    }

    if (verdict == "yes") return ParsedVote{true, std::nullopt};
    if (verdict != "no") throw FormatNotFound("no vote token found");

    std::string advice;
    std::size_t advice_pos = detail::find_ci(clean, kAdvice, after_verdict);
    if (advice_pos != std::string::npos)
        advice = detail::trim(clean.substr(advice_pos + kAdvice.size()));
    else if (after_verdict < clean.size())
        advice = detail::trim(clean.substr(after_verdict));
    return ParsedVote{false, advice};
}

// Answer extraction, in priority order: explicit "Answer: <label>", a standalone
// label token on the final line, then (word labels only) a yes/no/maybe-style
// search from the end of the text.
inline AnswerChoice parse_answer(const std::string& text, const std::vector<std::string>& labels) {
    if (labels.empty()) throw Error("parse_answer: empty label set");
    const std::string clean = detail::strip_bold(text);

    auto in_labels = [&](const std::string& token) -> std::optional<std::string> {
        for (const auto& l : labels)
            if (detail::lower(l) == detail::lower(token)) return l;
        return std::nullopt;
    };

    static const std::string kAnswer = "Answer:";
    std::size_t answer_pos = std::string::npos;
    for (std::size_t pos = detail::find_ci(clean, kAnswer); pos != std::string::npos;
         pos = detail::find_ci(clean, kAnswer, pos + 1))
        answer_pos = pos;
    if (answer_pos != std::string::npos) {
        std::size_t i = answer_pos + kAnswer.size();
        while (i < clean.size() && (clean[i] == ' ' || clean[i] == '\t')) ++i;
        std::size_t j = i;
        while (j < clean.size() && !std::isspace(static_cast<unsigned char>(clean[j]))) ++j;
        const std::string token = detail::strip_token_punct(clean.substr(i, j - i));
        if (!token.empty()) {
            if (auto label = in_labels(token)) return AnswerChoice{*label};
            throw LabelOutOfRange("answer '" + token + "' not among the option labels");
        }
    }

    auto lines = detail::split_lines(clean);
    while (!lines.empty() && detail::trim(lines.back()).empty()) lines.pop_back();
    if (!lines.empty()) {
        for (const auto& raw : detail::tokenize(lines.back())) {
            const std::string token = detail::strip_token_punct(raw);
            if (auto label = in_labels(token)) return AnswerChoice{*label};
        }
    }

    const bool word_labels =
        std::any_of(labels.begin(), labels.end(), [](const std::string& l) { return l.size() > 1; });
    if (word_labels) {
        std::optional<std::string> best;
        std::size_t best_pos = 0;
        const std::string lowered = detail::lower(clean);
        for (const auto& l : labels) {
            const std::string needle = detail::lower(l);
            std::size_t last = std::string::npos;
            for (std::size_t pos = lowered.find(needle); pos != std::string::npos;
                 pos = lowered.find(needle, pos + 1)) {
                // whole-word occurrences only
                const bool left_ok = pos == 0 || !std::isalpha(static_cast<unsigned char>(lowered[pos - 1]));
                const std::size_t end = pos + needle.size();
                const bool right_ok =
                    end >= lowered.size() || !std::isalpha(static_cast<unsigned char>(lowered[end]));
                if (left_ok && right_ok) last = pos;
            }
            if (last != std::string::npos && (!best || last > best_pos)) {
                best = l;
                best_pos = last;
            }
        }
        if (best) return AnswerChoice{*best};
    }

    throw AnswerNotFound("no answer token found");
}

}  // namespace medcollab
