#include "idcm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_set>

#include "idcm/util.hpp"

namespace idcm {

int effective_binarization(const Qrels& qrels, int requested) {
    if (qrels.max_grade() <= 1) {
        return 1;
    }
    return requested;
}

double ndcg_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff) {
    auto ideal = qrels.grades_for(ranking.query_id);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < ideal.size() && i < static_cast<std::size_t>(cutoff); ++i) {
        idcg += (std::exp2(ideal[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    if (idcg <= 0.0) {
        return 0.0;
    }
    double dcg = 0.0;
    for (std::size_t i = 0; i < ranking.docs.size() && i < static_cast<std::size_t>(cutoff); ++i) {
        const int g = qrels.grade(ranking.query_id, ranking.docs[i].doc_id);
        if (g > 0) {
            dcg += (std::exp2(g) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
        }
    }
    return dcg / idcg;
}

double mrr_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff, int binarization) {
    for (std::size_t i = 0; i < ranking.docs.size() && i < static_cast<std::size_t>(cutoff); ++i) {
        if (qrels.grade(ranking.query_id, ranking.docs[i].doc_id) >= binarization) {
            return 1.0 / static_cast<double>(i + 1);
        }
    }
    return 0.0;
}

double map_at(const QueryRanking& ranking, const Qrels& qrels, int cutoff, int binarization) {
    std::size_t total = 0;
    for (int g : qrels.grades_for(ranking.query_id)) {
        if (g >= binarization) {
            ++total;
        }
    }
    if (total == 0) {
        return 0.0;
    }
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < ranking.docs.size() && i < static_cast<std::size_t>(cutoff); ++i) {
        if (qrels.grade(ranking.query_id, ranking.docs[i].doc_id) >= binarization) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(total);
}

MetricReport evaluate(std::span<const QueryRanking> run, const Qrels& qrels, int binarization) {
    MetricReport report;
    report.binarization = effective_binarization(qrels, binarization);
    for (const auto& r : run) {
        QueryMetrics m;
        m.query_id = r.query_id;
        m.ndcg10 = ndcg_at(r, qrels, 10);
        m.mrr10 = mrr_at(r, qrels, 10, report.binarization);
        m.map100 = map_at(r, qrels, 100, report.binarization);
        report.ndcg10 += m.ndcg10;
        report.mrr10 += m.mrr10;
        report.map100 += m.map100;
        report.per_query.push_back(std::move(m));
    }
    if (!run.empty()) {
        const double n = static_cast<double>(run.size());
        report.ndcg10 /= n;
        report.mrr10 /= n;
        report.map100 /= n;
    }
    return report;
}

std::vector<QueryRanking> rankings_from_run(std::span<const CandidateList> run) {
    std::vector<QueryRanking> out;
    out.reserve(run.size());
    for (const auto& c : run) {
        QueryRanking r;
        r.query_id = c.query_id;
        for (std::size_t i = 0; i < c.doc_ids.size(); ++i) {
            r.docs.push_back(ScoredDoc{c.doc_ids[i], i < c.first_stage_scores.size() ? c.first_stage_scores[i] : 0.0});
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::string format_metrics_tsv(const MetricReport& report) {
    std::string out = "query_id\tndcg@10\tmrr@10\tmap@100\n";
    for (const auto& m : report.per_query) {
        out += m.query_id + '\t' + format_real(m.ndcg10) + '\t' + format_real(m.mrr10) + '\t' +
               format_real(m.map100) + '\n';
    }
    out += "all\t" + format_real(report.ndcg10) + '\t' + format_real(report.mrr10) + '\t' +
           format_real(report.map100) + '\n';
    return out;
}

std::string format_metrics_text(const MetricReport& report) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "queries %zu  binarization %d\nnDCG@10 %.4f  MRR@10 %.4f  MAP@100 %.4f\n",
                  report.query_count(), report.binarization, report.ndcg10, report.mrr10, report.map100);
    return buf;
}

double selection_recall(std::span<const int> student_selected, std::span<const double> teacher_scores,
                        int teacher_top) {
    if (teacher_scores.empty()) {
        throw Error("selection_recall: empty teacher score vector");
    }
    auto top = select_top_k(teacher_scores, teacher_top);
    std::unordered_set<int> chosen(student_selected.begin(), student_selected.end());
    std::size_t hit = 0;
    for (int idx : top) {
        if (chosen.contains(idx)) {
            ++hit;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(top.size());
}

RecallReport selection_recall_report(std::span<const DiagnosticRecord> student, const TeacherScoreTable& teacher,
                                     const Qrels* qrels, int teacher_top) {
    RecallReport report;
    for (const auto& rec : student) {
        const auto* scores = teacher.find(rec.query_id, rec.doc_id);
        if (scores == nullptr) {
            throw Error("no teacher scores for query " + rec.query_id + ", document " + rec.doc_id);
        }
        if (scores->size() != static_cast<std::size_t>(rec.window_count)) {
            throw Error("teacher scores for query " + rec.query_id + ", document " + rec.doc_id + " cover " +
                        std::to_string(scores->size()) + " windows, selection saw " +
                        std::to_string(rec.window_count));
        }
        const double r = selection_recall(rec.selected, *scores, teacher_top);
        const int grade = qrels != nullptr ? qrels->grade(rec.query_id, rec.doc_id) : 0;
        auto& g = report.by_grade[grade];
        g.mean += r;
        ++g.documents;
        report.overall += r;
        ++report.documents;
    }
    for (auto& [grade, g] : report.by_grade) {
        g.mean /= static_cast<double>(g.documents);
    }
    if (report.documents > 0) {
        report.overall /= static_cast<double>(report.documents);
    }
    return report;
}

TeacherScoreTable teacher_table_from_diagnostics(std::span<const DiagnosticRecord> records) {
    TeacherScoreTable table;
    for (const auto& rec : records) {
        if (rec.selected.size() != static_cast<std::size_t>(rec.window_count)) {
            throw Error("teacher diagnostics for query " + rec.query_id + ", document " + rec.doc_id +
                        " do not cover every window (rank with selector=all)");
        }
        std::vector<double> scores(static_cast<std::size_t>(rec.window_count), 0.0);
        for (std::size_t i = 0; i < rec.selected.size(); ++i) {
            scores[static_cast<std::size_t>(rec.selected[i])] = rec.etm_scores[i];
        }
        table.set(rec.query_id, rec.doc_id, std::move(scores));
    }
    return table;
}

std::string format_recall_tsv(const RecallReport& report) {
    std::string out = "grade\tdocuments\trecall\n";
    for (const auto& [grade, g] : report.by_grade) {
        out += std::to_string(grade) + '\t' + std::to_string(g.documents) + '\t' + format_real(g.mean) + '\n';
    }
    out += "all\t" + std::to_string(report.documents) + '\t' + format_real(report.overall) + '\n';
    return out;
}

PositionHistogram position_histogram(std::span<const DiagnosticRecord> records, int positions, int l) {
    PositionHistogram h;
    auto grow = [&](int index) {
        if (index >= static_cast<int>(h.available.size())) {
            const auto n = static_cast<std::size_t>(index) + 1;
            h.selected.resize(n, 0);
            h.top_l.resize(n, 0);
            h.available.resize(n, 0);
        }
    };
    grow(std::max(positions, 1) - 1);
    for (const auto& rec : records) {
        grow(rec.window_count - 1);
        for (int i = 0; i < rec.window_count; ++i) {
            ++h.available[static_cast<std::size_t>(i)];
        }
        for (int idx : rec.selected) {
            ++h.selected[static_cast<std::size_t>(idx)];
        }
        if (!rec.etm_scores.empty() && l > 0) {
            for (int pos : select_top_k(rec.etm_scores, l)) {
                ++h.top_l[static_cast<std::size_t>(rec.selected[static_cast<std::size_t>(pos)])];
            }
        }
    }
    return h;
}

std::string format_histogram_tsv(const PositionHistogram& histogram) {
    std::string out = "window_index\tselected\ttop_l\tavailable\n";
    for (std::size_t i = 0; i < histogram.available.size(); ++i) {
        out += std::to_string(i) + '\t' + std::to_string(histogram.selected[i]) + '\t' +
               std::to_string(histogram.top_l[i]) + '\t' + std::to_string(histogram.available[i]) + '\n';
    }
    return out;
}

} // namespace idcm
