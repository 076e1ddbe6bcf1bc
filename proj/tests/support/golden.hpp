#pragma once

// Golden-file matching: template text must appear verbatim in a rendered
// prompt except inside placeholder spans, which match anything.

#include <cctype>
#include <string>
#include <vector>

namespace golden {

struct Pattern {
    std::vector<std::string> literals;        // literals.size() == holes.size() + 1
    std::vector<std::string> holes;
};

/// Splits a template on {name} spans; "{{" and "}}" stand for single braces.
inline Pattern compile(const std::string& text) {
    Pattern p;
    p.literals.emplace_back();
    for (std::size_t i = 0; i < text.size();) {
        if (text.compare(i, 2, "{{") == 0 || text.compare(i, 2, "}}") == 0) {
            p.literals.back() += text[i];
            i += 2;
            continue;
        }
        if (text[i] == '{' && i + 1 < text.size() && (std::isalpha(static_cast<unsigned char>(text[i + 1])) || text[i + 1] == '_')) {
            auto close = text.find('}', i);
            auto name = close == std::string::npos ? std::string() : text.substr(i + 1, close - i - 1);
            bool ok = !name.empty();
            for (char c : name) ok = ok && !std::isspace(static_cast<unsigned char>(c)) && c != '{';
            if (ok) {
                p.holes.push_back(name);
                p.literals.emplace_back();
                i = close + 1;
                continue;
            }
        }
        p.literals.back() += text[i++];
    }
    return p;
}

/// Literal text with braces unescaped and no placeholders.
inline std::string unescape(const std::string& text) {
    auto p = compile(text);
    return p.literals.front();
}

/// Fills holes from the rendered text; returns false when a literal is out of place.
inline bool match(const Pattern& p, const std::string& rendered, std::vector<std::string>* captures = nullptr,
                  std::string* why = nullptr) {
    const auto& first = p.literals.front();
    if (rendered.compare(0, first.size(), first) != 0) {
        if (why) *why = "prefix differs";
        return false;
    }
    std::size_t pos = first.size();
    for (std::size_t k = 1; k < p.literals.size(); ++k) {
        const auto& lit = p.literals[k];
        std::size_t at;
        if (k + 1 == p.literals.size()) {
            if (rendered.size() < lit.size() || rendered.compare(rendered.size() - lit.size(), lit.size(), lit) != 0) {
                if (why) *why = "suffix after {" + p.holes[k - 1] + "} differs";
                return false;
            }
            at = rendered.size() - lit.size();
            if (at < pos) {
                if (why) *why = "overlap at {" + p.holes[k - 1] + "}";
                return false;
            }
        } else {
            at = rendered.find(lit, pos);
            if (at == std::string::npos) {
                if (why) *why = "literal after {" + p.holes[k - 1] + "} not found";
                return false;
            }
        }
        if (captures) captures->push_back(rendered.substr(pos, at - pos));
        pos = at + lit.size();
    }
    if (p.literals.size() == 1 && rendered.size() != first.size()) {
        if (why) *why = "extra text after template";
        return false;
    }
    return true;
}

inline std::string replace_once(std::string s, const std::string& from, const std::string& to) {
    if (auto at = s.find(from); at != std::string::npos) s.replace(at, from.size(), to);
    return s;
}

} // namespace golden
