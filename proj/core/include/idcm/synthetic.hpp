#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "idcm/corpus_io.hpp"
#include "idcm/windowing.hpp"

namespace idcm {

/// Knobs for the synthetic collection. Documents are background noise with query terms
/// planted into a few "hot" windows; relevance grows with the planted mass.
struct ToyOptions {
    std::uint64_t seed = 7;
    int queries = 12;
    int candidates_per_query = 6;
    int background_terms = 300;
    int topic_terms = 80;
    int min_windows = 2;
    int max_windows = 9;
    int min_hot_windows = 1;
    int max_hot_windows = 4;
    int triples_per_query = 2;
    WindowConfig window;
};

struct ToyQuery {
    std::string query_id;
    std::string text;
};

struct Judgment {
    std::string query_id;
    std::string doc_id;
    int grade = 0;
};

struct ToyCollection {
    std::vector<RawDocument> documents;
    std::vector<ToyQuery> queries;
    std::vector<CandidateList> run;  // first-stage order, scores descending
    std::vector<Judgment> judgments; // every candidate, grade 0 included
    Qrels qrels;
    std::vector<TrainTriple> triples;
};

ToyCollection make_toy_collection(const ToyOptions& options);

/// Writes collection.tsv, queries.tsv, run.tsv, qrels.txt and triples.tsv into `dir`.
void write_toy_collection(const ToyCollection& toy, const std::filesystem::path& dir);

} // namespace idcm
