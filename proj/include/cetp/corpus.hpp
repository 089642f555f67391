#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cetp/model.hpp"

namespace cetp {

struct Vocab {
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  std::vector<std::string> id_to_tok{"<pad>", "<bos>", "<eos>", "<unk>"};
  std::unordered_map<std::string, int> tok_to_id{
      {"<pad>", 0}, {"<bos>", 1}, {"<eos>", 2}, {"<unk>", 3}};

  int add(const std::string& tok);
  int id(const std::string& tok) const;  // kUnk when absent
  const std::string& tok(int id) const { return id_to_tok[id]; }
  int size() const { return static_cast<int>(id_to_tok.size()); }
};

struct MentionSpan {
  int sentence = 0;
  int start = 0;  // token offset within the sentence
  int len = 1;
  NodeId node = -1;
};

// One review: per-sentence token ids, per-token copy indicators
// (0 = copy, 1 = generate) and the mention spans behind them.
struct ReviewDocument {
  std::vector<std::vector<int>> sentences;
  std::vector<std::vector<uint8_t>> copy_gen;
  std::vector<MentionSpan> mentions;

  int total_tokens() const;
  std::vector<MentionSpan> sentence_mentions(int sentence) const;
};

enum class Split { kTrain = 0, kValid = 1, kTest = 2 };

struct Review {
  GenerationContext ctx;
  ReviewDocument doc;
  Split split = Split::kTrain;
};

struct Corpus {
  Vocab vocab;
  std::vector<Review> reviews;
};

// Lowercase, whitespace-separated, punctuation split off as single-char
// tokens. Word characters are alnum plus - _ '.
std::vector<std::string> tokenize(const std::string& text);
// Sentence boundaries at . ! ? with the delimiter kept as the last token.
std::vector<std::string> split_sentences(const std::string& text);

struct IngestResult {
  Corpus corpus;
  NodeRegistry nodes;
  RelationRegistry rels;
  Hkg hkg;
  std::map<std::pair<NodeId, NodeId>, int> cooccur_counts;
  int dropped_mentions = 0;
  int filtered_reviews = 0;
};

// Full ingestion: tokenize + segment reviews, build the vocabulary (top
// vocab_limit tokens), drop reviews over 100 tokens, count entity-keyword
// sentence co-occurrences, build the HKG and derive the copy indicators from
// mention spans. Reviews are split 8:1:1 with the config seed.
IngestResult ingest_corpus(const std::string& reviews_path, const std::string& triples_path,
                           const std::string& interactions_path, const std::string& kinds_path,
                           const std::string& keywords_path, const ModelConfig& cfg);

}  // namespace cetp
