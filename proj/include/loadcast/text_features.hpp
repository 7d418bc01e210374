#ifndef LOADCAST_TEXT_FEATURES_HPP
#define LOADCAST_TEXT_FEATURES_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "loadcast/csv.hpp"
#include "loadcast/errors.hpp"
#include "loadcast/timeseries.hpp"

namespace loadcast {

struct DailyCorpus {
    Date date{};
    std::vector<std::string> documents;
};

// One feature group as a dated table, the on-disk schema being
// text_<group>.csv with header date,f1,f2,...
struct TextFeatureTable {
    std::string group; // count | wordfreq | sentiment | topic | embedding | cg
    std::vector<Date> dates;
    std::vector<std::vector<double>> values; // dates x dims
    std::vector<std::string> dim_names;

    std::size_t dims() const { return dim_names.size(); }
};

struct Lexicon {
    // word -> (polarity in [-1,1], subjectivity in [0,1])
    std::map<std::string, std::pair<double, double>> words;
    std::set<std::string> negations;
};

// ---------------------------------------------------------------------------
// Tokenizer
// ---------------------------------------------------------------------------

// Lowercased word tokens. Token characters are ASCII alphanumerics (case
// folded) and any non-ASCII byte, so UTF-8 words survive intact. A hyphen
// between two token characters is kept ("covid-19"); all other punctuation
// separates tokens.
inline std::vector<std::string> tokenize(const std::string& document) {
    auto is_token_char = [](unsigned char c) {
        return std::isalnum(c) != 0 || c >= 0x80;
    };
    std::vector<std::string> tokens;
    std::string cur;
    const std::size_t n = document.size();
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char c = document[i];
        if (is_token_char(c)) {
            cur.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
        } else if (c == '-' && !cur.empty() && i + 1 < n &&
                   is_token_char(static_cast<unsigned char>(document[i + 1]))) {
            cur.push_back('-');
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

// ---------------------------------------------------------------------------
// Per-day feature rows
// ---------------------------------------------------------------------------

// (document count, total tokens, mean tokens per document; 0 when empty)
inline std::vector<double> count_features(const DailyCorpus& corpus) {
    double total = 0.0;
    for (const auto& doc : corpus.documents) {
        total += static_cast<double>(tokenize(doc).size());
    }
    const double n_docs = static_cast<double>(corpus.documents.size());
    return {n_docs, total, n_docs > 0 ? total / n_docs : 0.0};
}

inline const std::vector<std::string>& count_dim_names() {
    static const std::vector<std::string> names{"n_docs", "n_tokens", "mean_tokens"};
    return names;
}

// Relative frequency of each keyword over the day's token total.
inline std::vector<double> keyword_frequencies(const DailyCorpus& corpus,
                                               const std::vector<std::string>& keywords) {
    if (keywords.empty()) throw UsageError("keyword list must not be empty");
    std::map<std::string, double> counts;
    double total = 0.0;
    for (const auto& doc : corpus.documents) {
        for (const auto& tok : tokenize(doc)) {
            ++counts[tok];
            total += 1.0;
        }
    }
    std::vector<double> out;
    out.reserve(keywords.size());
    for (const auto& kw : keywords) {
        const auto it = counts.find(kw);
        out.push_back(total > 0.0 && it != counts.end() ? it->second / total : 0.0);
    }
    return out;
}

struct DocSentiment {
    double polarity = 0.0;
    double subjectivity = 0.0;
    int matches = 0;
};

// Mean of matched lexicon weights; a negation word immediately before a match
// flips the polarity. Documents without matches score (0, 0).
inline DocSentiment document_sentiment(const std::string& doc, const Lexicon& lexicon) {
    DocSentiment s;
    const auto tokens = tokenize(doc);
    double pol = 0.0, subj = 0.0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto it = lexicon.words.find(tokens[i]);
        if (it == lexicon.words.end()) continue;
        double p = it->second.first;
        if (i > 0 && lexicon.negations.count(tokens[i - 1])) p = -p;
        pol += p;
        subj += it->second.second;
        ++s.matches;
    }
    if (s.matches > 0) {
        s.polarity = pol / s.matches;
        s.subjectivity = subj / s.matches;
    }
    return s;
}

// Day row: mean/min/max polarity and mean/min subjectivity over documents.
// Minimum subjectivity is kept as its own dimension; empty days are all zero.
inline std::vector<double> sentiment(const DailyCorpus& corpus, const Lexicon& lexicon) {
    if (lexicon.words.empty()) throw UsageError("lexicon must not be empty");
    if (corpus.documents.empty()) return {0.0, 0.0, 0.0, 0.0, 0.0};
    double pol_sum = 0.0, subj_sum = 0.0;
    double pol_min = std::numeric_limits<double>::infinity();
    double pol_max = -std::numeric_limits<double>::infinity();
    double subj_min = std::numeric_limits<double>::infinity();
    for (const auto& doc : corpus.documents) {
        const DocSentiment s = document_sentiment(doc, lexicon);
        pol_sum += s.polarity;
        subj_sum += s.subjectivity;
        pol_min = std::min(pol_min, s.polarity);
        pol_max = std::max(pol_max, s.polarity);
        subj_min = std::min(subj_min, s.subjectivity);
    }
    const double n = static_cast<double>(corpus.documents.size());
    return {pol_sum / n, pol_min, pol_max, subj_sum / n, subj_min};
}

inline const std::vector<std::string>& sentiment_dim_names() {
    static const std::vector<std::string> names{"pol_mean", "pol_min", "pol_max", "subj_mean",
                                                "subj_min"};
    return names;
}

// ---------------------------------------------------------------------------
// Table builders
// ---------------------------------------------------------------------------

inline TextFeatureTable build_count_table(const std::vector<DailyCorpus>& days) {
    TextFeatureTable t;
    t.group = "count";
    t.dim_names = count_dim_names();
    for (const auto& day : days) {
        t.dates.push_back(day.date);
        t.values.push_back(count_features(day));
    }
    return t;
}

inline TextFeatureTable build_wordfreq_table(const std::vector<DailyCorpus>& days,
                                             const std::vector<std::string>& keywords) {
    TextFeatureTable t;
    t.group = "wordfreq";
    t.dim_names = keywords;
    for (const auto& day : days) {
        t.dates.push_back(day.date);
        t.values.push_back(keyword_frequencies(day, keywords));
    }
    return t;
}

inline TextFeatureTable build_sentiment_table(const std::vector<DailyCorpus>& days,
                                              const Lexicon& lexicon) {
    TextFeatureTable t;
    t.group = "sentiment";
    t.dim_names = sentiment_dim_names();
    for (const auto& day : days) {
        t.dates.push_back(day.date);
        t.values.push_back(sentiment(day, lexicon));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Precomputed tables (topics, embeddings)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultEmbeddingDim = 100;
inline constexpr double kSimplexTolerance = 1e-3;

// Topic rows must sit on the probability simplex (renormalized when within
// 1e-3 of it); embeddings must have the expected dimension. Pass
// expected_embedding_dim = 0 to accept any width.
inline TextFeatureTable load_precomputed(const std::string& path, const std::string& group,
                                         std::size_t expected_embedding_dim = kDefaultEmbeddingDim) {
    if (group != "topic" && group != "embedding") {
        throw UsageError("precomputed group must be topic or embedding, got " + group);
    }
    const CsvFile f = read_csv_file(path);
    if (f.header.size() < 2 || f.header[0] != "date") {
        throw ParseError(path + ": text feature header must be date,f1,...");
    }
    TextFeatureTable t;
    t.group = group;
    t.dim_names.assign(f.header.begin() + 1, f.header.end());

    if (group == "embedding" && expected_embedding_dim != 0 &&
        t.dims() != expected_embedding_dim) {
        throw DimensionMismatch(path + ": embedding has " + std::to_string(t.dims()) +
                                " dims, expected " + std::to_string(expected_embedding_dim));
    }

    for (const auto& row : f.rows) {
        if (row.fields.size() != f.header.size()) {
            throw ParseError(path + ":" + std::to_string(row.line_no) + ": field count mismatch");
        }
        const std::string ctx = "at " + path + ":" + std::to_string(row.line_no);
        const Date d = parse_date(row.fields[0]);
        if (!t.dates.empty() && d <= t.dates.back()) {
            throw NonMonotonicTime(path + ":" + std::to_string(row.line_no) +
                                   ": dates must be strictly increasing");
        }
        std::vector<double> vals;
        vals.reserve(t.dims());
        for (std::size_t i = 1; i < row.fields.size(); ++i) {
            const double v = parse_double(row.fields[i], ctx);
            if (!std::isfinite(v)) throw ParseError("non-finite value " + ctx);
            vals.push_back(v);
        }
        if (group == "topic") {
            double sum = 0.0;
            for (double v : vals) {
                if (v < 0.0) {
                    throw SimplexViolation(path + ":" + std::to_string(row.line_no) +
                                           ": negative topic probability");
                }
                sum += v;
            }
            if (std::fabs(sum - 1.0) > kSimplexTolerance) {
                throw SimplexViolation(path + ":" + std::to_string(row.line_no) +
                                       ": topic row sums to " + format_sig6(sum));
            }
            for (double& v : vals) v /= sum;
        }
        t.dates.push_back(d);
        t.values.push_back(std::move(vals));
    }
    return t;
}

// ---------------------------------------------------------------------------
// I/O: corpus, lexicon, feature tables
// ---------------------------------------------------------------------------

// JSON-lines corpus, one object per document: {date, title, description,
// body}. Missing text fields are treated as empty; days are merged and
// returned sorted by date.
inline std::vector<DailyCorpus> load_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::map<Date, DailyCorpus> by_date;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!j.contains("date")) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": missing date");
        }
        const Date d = parse_date(j["date"].get<std::string>());
        std::string text;
        for (const char* key : {"title", "description", "body"}) {
            if (j.contains(key) && j[key].is_string()) {
                if (!text.empty()) text += " ";
                text += j[key].get<std::string>();
            }
        }
        auto& day = by_date[d];
        day.date = d;
        day.documents.push_back(std::move(text));
    }
    std::vector<DailyCorpus> out;
    out.reserve(by_date.size());
    for (auto& [d, corpus] : by_date) out.push_back(std::move(corpus));
    return out;
}

// lexicon.csv: word,polarity,subjectivity,negation (negation 0/1; negation
// rows may leave the weights at 0)
inline Lexicon load_lexicon(const std::string& path) {
    const CsvFile f = read_csv_file(path);
    Lexicon lex;
    for (const auto& row : f.rows) {
        const std::string ctx = "at " + path + ":" + std::to_string(row.line_no);
        if (row.fields.size() < 3) throw ParseError("expected word,polarity,subjectivity " + ctx);
        const std::string& word = row.fields[0];
        const bool negation = row.fields.size() > 3 && row.fields[3] == "1";
        if (negation) {
            lex.negations.insert(word);
            continue;
        }
        const double pol = parse_double(row.fields[1], ctx);
        const double subj = parse_double(row.fields[2], ctx);
        if (pol < -1.0 || pol > 1.0 || subj < 0.0 || subj > 1.0) {
            throw ParseError("lexicon weights out of range " + ctx);
        }
        lex.words[word] = {pol, subj};
    }
    if (lex.negations.empty()) {
        lex.negations = {"not", "no", "never", "neither", "nor", "cannot"};
    }
    return lex;
}

// small built-in lexicon so the demo pipeline runs without external files
inline Lexicon default_lexicon() {
    Lexicon lex;
    lex.words = {
        {"good", {0.7, 0.6}},     {"great", {0.8, 0.75}},   {"excellent", {1.0, 1.0}},
        {"positive", {0.5, 0.4}}, {"calm", {0.3, 0.3}},     {"improve", {0.4, 0.4}},
        {"win", {0.6, 0.5}},      {"growth", {0.4, 0.35}},  {"strong", {0.45, 0.4}},
        {"bad", {-0.7, 0.65}},    {"terrible", {-1.0, 1.0}}, {"crisis", {-0.8, 0.7}},
        {"negative", {-0.5, 0.4}}, {"strike", {-0.4, 0.5}},  {"conflict", {-0.6, 0.55}},
        {"war", {-0.9, 0.8}},     {"lockdown", {-0.5, 0.6}}, {"shortage", {-0.55, 0.5}},
        {"weak", {-0.45, 0.4}},   {"fail", {-0.6, 0.5}},
    };
    lex.negations = {"not", "no", "never", "neither", "nor", "cannot"};
    return lex;
}

inline void write_feature_table(const TextFeatureTable& t, const std::string& path) {
    std::vector<std::string> lines;
    std::vector<std::string> header{"date"};
    header.insert(header.end(), t.dim_names.begin(), t.dim_names.end());
    lines.push_back(join_csv(header));
    for (std::size_t i = 0; i < t.dates.size(); ++i) {
        std::vector<std::string> fields{format_date(t.dates[i])};
        for (double v : t.values[i]) fields.push_back(format_full(v));
        lines.push_back(join_csv(fields));
    }
    write_lines(path, lines);
}

} // namespace loadcast

#endif
