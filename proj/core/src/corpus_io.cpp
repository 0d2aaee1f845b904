#include "idcm/corpus_io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "idcm/util.hpp"
#include "idcm/windowing.hpp"

namespace idcm {

// ---------------------------------------------------------------------------
// Vocabulary and tokenizer

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
    ids_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
        auto [it, inserted] = ids_.emplace(terms_[i], static_cast<TokenId>(i + 2));
        if (!inserted) {
            throw Error("duplicate vocabulary term '" + terms_[i] + "'");
        }
    }
}

TokenId Vocabulary::lookup(std::string_view term) const {
    auto it = ids_.find(std::string(term));
    return it == ids_.end() ? kOovId : it->second;
}

std::string_view Vocabulary::term(TokenId id) const {
    if (id == kPadId) {
        return "<pad>";
    }
    if (id == kOovId || id - 2 >= terms_.size()) {
        return "<oov>";
    }
    return terms_[id - 2];
}

namespace {

// Decode one UTF-8 code point starting at text[i]; advances i. Invalid bytes decode as
// themselves so that arbitrary input never stalls the tokenizer.
char32_t next_code_point(std::string_view text, std::size_t& i) {
    auto byte = static_cast<unsigned char>(text[i]);
    int extra = 0;
    char32_t cp = byte;
    if (byte >= 0xF0 && byte < 0xF8) {
        extra = 3;
        cp = byte & 0x07;
    } else if (byte >= 0xE0) {
        extra = byte < 0xF0 ? 2 : 0;
        cp = byte & 0x0F;
    } else if (byte >= 0xC0) {
        extra = 1;
        cp = byte & 0x1F;
    }
    if (extra == 0 || i + static_cast<std::size_t>(extra) >= text.size()) {
        ++i;
        return byte;
    }
    for (int k = 1; k <= extra; ++k) {
        auto cont = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
        if ((cont & 0xC0) != 0x80) {
            ++i;
            return byte;
        }
        cp = (cp << 6) | (cont & 0x3F);
    }
    i += static_cast<std::size_t>(extra) + 1;
    return cp;
}

bool is_separator(char32_t cp) {
    if (cp < 0x80) {
        auto c = static_cast<unsigned char>(cp);
        bool space = c == ' ' || (c >= 0x09 && c <= 0x0D);
        bool punct = (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) || (c >= 0x5B && c <= 0x60) ||
                     (c >= 0x7B && c <= 0x7E);
        return space || punct || c < 0x20 || c == 0x7F;
    }
    // Unicode whitespace
    if (cp == 0x85 || cp == 0xA0 || cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
        cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000) {
        return true;
    }
    // Latin-1 punctuation and symbols, general punctuation, CJK punctuation, fullwidth ASCII punctuation
    if ((cp >= 0xA1 && cp <= 0xBF && cp != 0xAA && cp != 0xB2 && cp != 0xB3 && cp != 0xB5 && cp != 0xB9 &&
         cp != 0xBA && cp != 0xBC && cp != 0xBD && cp != 0xBE) ||
        cp == 0xD7 || cp == 0xF7) {
        return true;
    }
    if ((cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) || (cp >= 0x3001 && cp <= 0x3003) ||
        (cp >= 0x3008 && cp <= 0x3011) || (cp >= 0xFF01 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20)) {
        return true;
    }
    return false;
}

} // namespace

std::vector<std::string> split_terms(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    std::size_t i = 0;
    while (i < text.size()) {
        std::size_t start = i;
        char32_t cp = next_code_point(text, i);
        if (is_separator(cp)) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
            continue;
        }
        if (cp < 0x80) {
            char c = static_cast<char>(cp);
            if (c >= 'A' && c <= 'Z') {
                c = static_cast<char>(c - 'A' + 'a');
            }
            current.push_back(c);
        } else {
            current.append(text.substr(start, i - start));
        }
    }
    if (!current.empty()) {
        out.push_back(std::move(current));
    }
    return out;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
    auto terms = split_terms(text);
    std::vector<TokenId> ids;
    ids.reserve(terms.size());
    for (const auto& t : terms) {
        ids.push_back(vocab.lookup(t));
    }
    return ids;
}

Vocabulary build_vocabulary(std::span<const std::string> texts, std::size_t min_count) {
    if (min_count < 1) {
        throw ConfigError("min_count must be >= 1");
    }
    if (texts.empty()) {
        throw Error("cannot build a vocabulary from an empty corpus");
    }
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (auto& term : split_terms(text)) {
            ++counts[std::move(term)];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [term, count] : counts) {
        if (count >= min_count) {
            kept.emplace_back(term, count);
        }
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) {
            return a.second > b.second;
        }
        return a.first < b.first;
    });
    std::vector<std::string> terms;
    terms.reserve(kept.size());
    for (auto& [term, count] : kept) {
        terms.push_back(std::move(term));
    }
    return Vocabulary(std::move(terms));
}

// ---------------------------------------------------------------------------
// Corpus

void Corpus::add(TokenizedDocument doc) {
    auto [it, inserted] = index_.emplace(doc.doc_id, docs_.size());
    if (!inserted) {
        throw Error("duplicate document id '" + doc.doc_id + "'");
    }
    docs_.push_back(std::move(doc));
}

const TokenizedDocument* Corpus::find(std::string_view doc_id) const {
    auto it = index_.find(std::string(doc_id));
    return it == index_.end() ? nullptr : &docs_[it->second];
}

const TokenizedDocument& Corpus::at(std::string_view doc_id) const {
    const auto* doc = find(doc_id);
    if (doc == nullptr) {
        throw Error("document '" + std::string(doc_id) + "' not found in corpus");
    }
    return *doc;
}

namespace {

template <typename Fn>
void for_each_line(std::string_view content, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < content.size()) {
        auto end = content.find('\n', start);
        if (end == std::string_view::npos) {
            end = content.size();
        }
        auto line = content.substr(start, end - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        ++line_no;
        fn(line, line_no);
        start = end + 1;
    }
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
            ++i;
        }
        if (i >= line.size()) {
            break;
        }
        auto j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') {
            ++j;
        }
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

} // namespace

std::vector<RawDocument> read_collection(const std::filesystem::path& path) {
    const auto content = read_file(path);
    const auto source = path.string();
    std::vector<RawDocument> docs;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto fields = split(line, '\t');
        if (fields.size() != 4) {
            throw FormatError(source, line_no,
                              "expected 4 tab-separated fields (doc_id, url, title, body), got " +
                                  std::to_string(fields.size()));
        }
        if (trim(fields[0]).empty()) {
            throw FormatError(source, line_no, "empty doc_id");
        }
        RawDocument doc;
        doc.doc_id = std::string(trim(fields[0]));
        doc.text = std::string(fields[2]) + " " + std::string(fields[3]);
        docs.push_back(std::move(doc));
    });
    return docs;
}

Corpus tokenize_collection(std::span<const RawDocument> raw, const Vocabulary& vocab) {
    Corpus corpus;
    std::size_t rejected = 0;
    for (const auto& doc : raw) {
        auto tokens = tokenize(doc.text, vocab);
        if (tokens.empty()) {
            ++rejected;
            warn("document '" + doc.doc_id + "' has no tokens; rejected");
            continue;
        }
        corpus.add(TokenizedDocument{doc.doc_id, std::move(tokens)});
    }
    (void)rejected;
    return corpus;
}

Query make_query(std::string query_id, std::string_view text, const Vocabulary& vocab, std::size_t max_tokens) {
    Query q{std::move(query_id), tokenize(text, vocab)};
    if (q.tokens.size() > max_tokens) {
        q.tokens.resize(max_tokens);
    }
    return q;
}

std::vector<Query> read_queries(const std::filesystem::path& path, const Vocabulary& vocab, std::size_t max_tokens) {
    const auto content = read_file(path);
    const auto source = path.string();
    std::vector<Query> queries;
    std::set<std::string, std::less<>> seen;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw FormatError(source, line_no, "expected query_id<TAB>text");
        }
        auto qid = std::string(trim(line.substr(0, tab)));
        if (qid.empty()) {
            throw FormatError(source, line_no, "empty query_id");
        }
        if (!seen.insert(qid).second) {
            throw FormatError(source, line_no, "duplicate query_id '" + qid + "'");
        }
        auto q = make_query(qid, line.substr(tab + 1), vocab, max_tokens);
        if (q.tokens.empty()) {
            warn("query '" + qid + "' has no tokens; skipped");
            return;
        }
        queries.push_back(std::move(q));
    });
    return queries;
}

// ---------------------------------------------------------------------------
// Run files

std::vector<CandidateList> parse_run(std::string_view content, const std::string& source, std::size_t max_candidates) {
    struct Row {
        long long rank;
        std::size_t order;
        std::string doc_id;
        double score;
    };
    std::vector<std::string> query_order;
    std::unordered_map<std::string, std::vector<Row>> rows;
    std::size_t order = 0;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto f = split_ws(line);
        if (f.size() != 6) {
            throw FormatError(source, line_no, "expected 6 columns (qid Q0 docid rank score tag), got " +
                                                   std::to_string(f.size()));
        }
        long long rank = 0;
        double score = 0;
        if (!parse_int(f[3], rank)) {
            throw FormatError(source, line_no, "invalid rank '" + std::string(f[3]) + "'");
        }
        if (!parse_real(f[4], score)) {
            throw FormatError(source, line_no, "invalid score '" + std::string(f[4]) + "'");
        }
        std::string qid(f[0]);
        auto [it, inserted] = rows.try_emplace(qid);
        if (inserted) {
            query_order.push_back(qid);
        }
        for (const auto& r : it->second) {
            if (r.doc_id == f[2]) {
                throw FormatError(source, line_no, "duplicate document '" + std::string(f[2]) + "' for query " + qid);
            }
        }
        it->second.push_back(Row{rank, order++, std::string(f[2]), score});
    });

    std::vector<CandidateList> lists;
    lists.reserve(query_order.size());
    for (const auto& qid : query_order) {
        auto& group = rows[qid];
        std::stable_sort(group.begin(), group.end(), [](const Row& a, const Row& b) { return a.rank < b.rank; });
        if (group.size() > max_candidates) {
            warn("query " + qid + " has " + std::to_string(group.size()) + " candidates; truncated to " +
                 std::to_string(max_candidates));
            group.resize(max_candidates);
        }
        CandidateList list;
        list.query_id = qid;
        for (auto& r : group) {
            list.doc_ids.push_back(std::move(r.doc_id));
            list.first_stage_scores.push_back(r.score);
        }
        lists.push_back(std::move(list));
    }
    return lists;
}

std::vector<CandidateList> read_run_file(const std::filesystem::path& path, std::size_t max_candidates) {
    return parse_run(read_file(path), path.string(), max_candidates);
}

void sort_ranking(std::vector<ScoredDoc>& docs) {
    std::sort(docs.begin(), docs.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        return a.doc_id < b.doc_id;
    });
}

std::string format_run(std::span<const QueryRanking> rankings, std::string_view tag) {
    std::string out;
    for (const auto& ranking : rankings) {
        auto docs = ranking.docs;
        sort_ranking(docs);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            out += ranking.query_id;
            out += " Q0 ";
            out += docs[i].doc_id;
            out += ' ';
            out += std::to_string(i + 1);
            out += ' ';
            out += format_real(docs[i].score);
            out += ' ';
            out += tag;
            out += '\n';
        }
    }
    return out;
}

void write_run_file(std::span<const QueryRanking> rankings, std::string_view tag, const std::filesystem::path& path) {
    atomic_write(path, format_run(rankings, tag));
}

// ---------------------------------------------------------------------------
// Qrels and triples

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        throw Error("negative relevance grade for (" + query_id + ", " + doc_id + ")");
    }
    judgments_[query_id][doc_id] = grade;
    max_grade_ = std::max(max_grade_, grade);
}

int Qrels::grade(std::string_view query_id, std::string_view doc_id) const {
    auto q = judgments_.find(query_id);
    if (q == judgments_.end()) {
        return 0;
    }
    auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

std::vector<int> Qrels::grades_for(std::string_view query_id) const {
    std::vector<int> out;
    auto q = judgments_.find(query_id);
    if (q != judgments_.end()) {
        for (const auto& [doc, g] : q->second) {
            out.push_back(g);
        }
    }
    return out;
}

Qrels parse_qrels(std::string_view content, const std::string& source) {
    Qrels qrels;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto f = split_ws(line);
        if (f.size() != 4) {
            throw FormatError(source, line_no, "expected 4 columns (qid 0 docid grade), got " + std::to_string(f.size()));
        }
        long long grade = 0;
        if (!parse_int(f[3], grade) || grade < 0) {
            throw FormatError(source, line_no, "grade must be a non-negative integer, got '" + std::string(f[3]) + "'");
        }
        qrels.set(std::string(f[0]), std::string(f[2]), static_cast<int>(grade));
    });
    return qrels;
}

Qrels read_qrels(const std::filesystem::path& path) { return parse_qrels(read_file(path), path.string()); }

std::vector<TrainTriple> read_triples(const std::filesystem::path& path) {
    const auto content = read_file(path);
    const auto source = path.string();
    std::vector<TrainTriple> triples;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto f = split(line, '\t');
        if (f.size() != 3) {
            throw FormatError(source, line_no, "expected query_id<TAB>positive<TAB>negative");
        }
        TrainTriple t{std::string(trim(f[0])), std::string(trim(f[1])), std::string(trim(f[2]))};
        if (t.positive == t.negative) {
            throw FormatError(source, line_no, "positive and negative document are identical");
        }
        triples.push_back(std::move(t));
    });
    return triples;
}

// ---------------------------------------------------------------------------
// Teacher score tables

void TeacherScoreTable::set(const std::string& query_id, const std::string& doc_id, std::vector<double> scores) {
    table_[{query_id, doc_id}] = std::move(scores);
}

const std::vector<double>* TeacherScoreTable::find(std::string_view query_id, std::string_view doc_id) const {
    auto it = table_.find(Key{std::string(query_id), std::string(doc_id)});
    return it == table_.end() ? nullptr : &it->second;
}

const std::vector<double>& TeacherScoreTable::at(std::string_view query_id, std::string_view doc_id) const {
    const auto* v = find(query_id, doc_id);
    if (v == nullptr) {
        throw Error("no teacher scores for (" + std::string(query_id) + ", " + std::string(doc_id) + ")");
    }
    return *v;
}

TeacherScoreTable parse_teacher_scores(std::string_view content, const std::string& source, const WindowConfig& window,
                                       const Corpus& corpus) {
    window.validate();
    std::map<TeacherScoreTable::Key, std::vector<double>> staged;
    for_each_line(content, [&](std::string_view line, std::size_t line_no) {
        if (trim(line).empty()) {
            return;
        }
        auto f = split(line, '\t');
        if (f.size() != 4) {
            throw FormatError(source, line_no, "expected query_id, doc_id, window_index, score");
        }
        long long idx = 0;
        double score = 0;
        if (!parse_int(f[2], idx) || idx < 0) {
            throw FormatError(source, line_no, "invalid window_index '" + std::string(f[2]) + "'");
        }
        if (!parse_real(f[3], score)) {
            throw FormatError(source, line_no, "invalid score '" + std::string(f[3]) + "'");
        }
        auto& vec = staged[{std::string(trim(f[0])), std::string(trim(f[1]))}];
        if (static_cast<std::size_t>(idx) != vec.size()) {
            throw FormatError(source, line_no,
                              "window_index " + std::to_string(idx) + " is not contiguous (expected " +
                                  std::to_string(vec.size()) + ")");
        }
        vec.push_back(score);
    });

    TeacherScoreTable table;
    for (auto& [key, scores] : staged) {
        const auto* doc = corpus.find(key.second);
        if (doc == nullptr) {
            throw Error("teacher scores reference unknown document '" + key.second + "' (query " + key.first + ")");
        }
        auto expected = static_cast<std::size_t>(window_count(doc->tokens.size(), window));
        if (scores.size() != expected) {
            throw Error("teacher score length mismatch for (" + key.first + ", " + key.second + "): expected " +
                        std::to_string(expected) + ", got " + std::to_string(scores.size()));
        }
        table.set(key.first, key.second, std::move(scores));
    }
    return table;
}

TeacherScoreTable read_teacher_scores(const std::filesystem::path& path, const WindowConfig& window,
                                      const Corpus& corpus) {
    return parse_teacher_scores(read_file(path), path.string(), window, corpus);
}

std::string format_teacher_scores(const TeacherScoreTable& table, std::span<const TeacherScoreTable::Key> order) {
    std::string out;
    for (const auto& key : order) {
        const auto& scores = table.at(key.first, key.second);
        for (std::size_t i = 0; i < scores.size(); ++i) {
            out += key.first;
            out += '\t';
            out += key.second;
            out += '\t';
            out += std::to_string(i);
            out += '\t';
            out += format_real(scores[i]);
            out += '\n';
        }
    }
    return out;
}

} // namespace idcm
