#include <algorithm>
#include <unordered_map>

#include "semanom/similarity.hpp"

namespace semanom {

namespace {

struct Decoded {
    char32_t cp;
    std::size_t length;
};

// Decodes one UTF-8 sequence; malformed bytes come back as U+FFFD, length 1.
Decoded decode_utf8(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) return {b0, 1};
    std::size_t len = 0;
    char32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return {0xFFFD, 1};
    }
    if (i + len > s.size()) return {0xFFFD, 1};
    for (std::size_t k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
        cp = (cp << 6) | (b & 0x3F);
    }
    return {cp, len};
}

void encode_utf8(char32_t cp, std::string& out) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

bool is_unicode_space(char32_t c) {
    return c == ' ' || (c >= 0x09 && c <= 0x0D) || c == 0x85 || c == 0xA0 || c == 0x1680 ||
           (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 || c == 0x202F ||
           c == 0x205F || c == 0x3000;
}

bool is_unicode_punct(char32_t c) {
    if (c < 0x80) return (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
                         (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
    return (c >= 0xA1 && c <= 0xBF) || c == 0xD7 || c == 0xF7 || (c >= 0x2010 && c <= 0x2027) ||
           (c >= 0x2030 && c <= 0x205E) || (c >= 0x2E00 && c <= 0x2E7F) ||
           (c >= 0x3001 && c <= 0x303F) || (c >= 0xFF01 && c <= 0xFF0F) ||
           (c >= 0xFF1A && c <= 0xFF20) || (c >= 0xFF3B && c <= 0xFF40) ||
           (c >= 0xFF5B && c <= 0xFF65);
}

// Simple one-to-one lowercasing for ASCII, Latin-1, Greek and Cyrillic capitals.
char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 32;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 32;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 32;
    if (c >= 0x410 && c <= 0x42F) return c + 32;
    if (c >= 0x400 && c <= 0x40F) return c + 80;
    return c;
}

} // namespace

std::vector<double> SimilarityBackend::score_batch(std::span<const TextPair> pairs) const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(score(p.hypothesis, p.reference));
    return out;
}

std::vector<std::string> surrogate_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (std::size_t i = 0; i < text.size();) {
        const auto [cp, len] = decode_utf8(text, i);
        i += len;
        if (is_unicode_space(cp) || is_unicode_punct(cp)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
            continue;
        }
        encode_utf8(to_lower(cp), current);
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

double surrogate_score(std::string_view hypothesis, std::string_view reference) {
    const auto hyp = surrogate_tokens(hypothesis);
    const auto ref = surrogate_tokens(reference);
    if (hyp.empty() && ref.empty()) return 1.0;
    if (hyp.empty() || ref.empty()) return 0.0;

    std::unordered_map<std::string_view, std::size_t> ref_counts;
    for (const auto& t : ref) ++ref_counts[t];
    std::size_t overlap = 0;
    for (const auto& t : hyp) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    // 2PR/(P+R) with P = overlap/|hyp| and R = overlap/|ref| reduces to this.
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(hyp.size() + ref.size());
}

double ViewScore::get(View view) const {
    switch (view) {
    case View::Phe: return phe;
    case View::Rea: return rea;
    case View::Full: return full;
    }
    return full;
}

double mix_full(double phe, double rea, double alpha) {
    return alpha * phe + (1.0 - alpha) * rea;
}

ViewScore view_similarity(const AnomalyRecord& pred, const AnomalyRecord& gt,
                          const SimilarityConfig& cfg, const SimilarityBackend& backend) {
    cfg.validate();
    const std::vector<TextPair> pairs = {{pred.phenomenon, gt.phenomenon}, {pred.reasoning, gt.reasoning}};
    const auto scores = backend.score_batch(pairs);
    ViewScore v;
    v.phe = std::clamp(scores.at(0), 0.0, 1.0);
    v.rea = std::clamp(scores.at(1), 0.0, 1.0);
    v.full = mix_full(v.phe, v.rea, cfg.alpha);
    return v;
}

} // namespace semanom
