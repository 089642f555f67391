#include "cetp/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cetp/errors.hpp"

namespace cetp {

using nlohmann::json;

int Vocab::add(const std::string& tok) {
  auto it = tok_to_id.find(tok);
  if (it != tok_to_id.end()) return it->second;
  const int id = size();
  id_to_tok.push_back(tok);
  tok_to_id[tok] = id;
  return id;
}

int Vocab::id(const std::string& tok) const {
  auto it = tok_to_id.find(tok);
  return it == tok_to_id.end() ? kUnk : it->second;
}

int ReviewDocument::total_tokens() const {
  int n = 0;
  for (const auto& s : sentences) n += static_cast<int>(s.size());
  return n;
}

std::vector<MentionSpan> ReviewDocument::sentence_mentions(int sentence) const {
  std::vector<MentionSpan> out;
  for (const MentionSpan& m : mentions)
    if (m.sentence == sentence) out.push_back(m);
  return out;
}

namespace {

bool word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '\'';
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(raw)));
    if (word_char(c)) {
      cur += c;
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(std::string(1, c));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    cur += c;
    if (c == '.' || c == '!' || c == '?') {
      out.push_back(cur);
      cur.clear();
    }
  }
  const bool only_space =
      std::all_of(cur.begin(), cur.end(),
                  [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
  if (!only_space && !cur.empty()) out.push_back(cur);
  return out;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::vector<std::string> split_tsv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == '\t') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

[[noreturn]] void bad_line(const std::string& path, size_t lineno, const std::string& why) {
  throw ValidationError(path + ":" + std::to_string(lineno) + ": " + why);
}

}  // namespace

IngestResult ingest_corpus(const std::string& reviews_path, const std::string& triples_path,
                           const std::string& interactions_path, const std::string& kinds_path,
                           const std::string& keywords_path, const ModelConfig& cfg) {
  IngestResult out;

  // Node kinds.
  {
    const auto lines = read_lines(kinds_path);
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty() || lines[i][0] == '#') continue;
      const auto f = split_tsv(lines[i]);
      if (f.size() != 2) bad_line(kinds_path, i + 1, "expected node<TAB>kind");
      const auto kind = parse_kind(f[1]);
      if (!kind) bad_line(kinds_path, i + 1, "unknown kind '" + f[1] + "'");
      out.nodes.declare(f[0], *kind);
    }
  }

  // Keyword lexicon: every listed word must be a registered keyword node.
  for (size_t i = 0; const auto& line : read_lines(keywords_path)) {
    ++i;
    if (line.empty() || line[0] == '#') continue;
    const auto id = out.nodes.find(line);
    if (!id || out.nodes.kind(*id) != NodeKind::kKeyword)
      bad_line(keywords_path, i, "keyword '" + line + "' not registered as a keyword node");
  }

  // KG triples; relations declared in file order.
  std::vector<Triple> triples;
  {
    const auto lines = read_lines(triples_path);
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty() || lines[i][0] == '#') continue;
      const auto f = split_tsv(lines[i]);
      if (f.size() != 3) bad_line(triples_path, i + 1, "expected head<TAB>relation<TAB>tail");
      const auto h = out.nodes.find(f[0]);
      const auto t = out.nodes.find(f[2]);
      if (!h) bad_line(triples_path, i + 1, "unknown node '" + f[0] + "'");
      if (!t) bad_line(triples_path, i + 1, "unknown node '" + f[2] + "'");
      triples.push_back({*h, out.rels.declare(f[1]), *t});
    }
  }

  // Interactions.
  std::vector<std::pair<NodeId, NodeId>> interactions;
  {
    const auto lines = read_lines(interactions_path);
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty() || lines[i][0] == '#') continue;
      const auto f = split_tsv(lines[i]);
      if (f.size() != 2) bad_line(interactions_path, i + 1, "expected user<TAB>item");
      const auto u = out.nodes.find(f[0]);
      const auto it = out.nodes.find(f[1]);
      if (!u) bad_line(interactions_path, i + 1, "unknown node '" + f[0] + "'");
      if (!it) bad_line(interactions_path, i + 1, "unknown node '" + f[1] + "'");
      interactions.push_back({*u, *it});
    }
  }

  // Reviews: tokenize, segment, resolve mentions, count raw word frequency.
  struct RawReview {
    GenerationContext ctx;
    std::vector<std::vector<std::string>> sentences;
    std::vector<MentionSpan> mentions;
  };
  std::vector<RawReview> raws;
  std::map<std::string, long> word_freq;
  {
    const auto lines = read_lines(reviews_path);
    for (size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      json j;
      try {
        j = json::parse(lines[i]);
      } catch (const json::parse_error& e) {
        bad_line(reviews_path, i + 1, std::string("bad json: ") + e.what());
      }
      RawReview r;
      try {
        r.ctx.user = out.nodes.require(j.at("user").get<std::string>());
        r.ctx.item = out.nodes.require(j.at("item").get<std::string>());
        r.ctx.rating = j.at("rating").get<int>();
        for (const std::string& s : split_sentences(j.at("text").get<std::string>()))
          r.sentences.push_back(tokenize(s));
        if (j.contains("mentions"))
          for (const auto& m : j.at("mentions")) {
            MentionSpan span;
            span.sentence = m.at("sentence").get<int>();
            span.start = m.at("start").get<int>();
            span.len = m.at("len").get<int>();
            const auto node = out.nodes.find(m.at("node").get<std::string>());
            if (!node) {
              ++out.dropped_mentions;
              continue;
            }
            span.node = *node;
            const bool in_range =
                span.sentence >= 0 && span.sentence < static_cast<int>(r.sentences.size()) &&
                span.start >= 0 && span.len >= 1 &&
                span.start + span.len <= static_cast<int>(r.sentences[span.sentence].size());
            if (!in_range) {
              ++out.dropped_mentions;
              continue;
            }
            r.mentions.push_back(span);
          }
      } catch (const json::exception& e) {
        bad_line(reviews_path, i + 1, std::string("bad review record: ") + e.what());
      }
      int total = 0;
      for (const auto& s : r.sentences) total += static_cast<int>(s.size());
      if (total > 100) {  // corpus filter
        ++out.filtered_reviews;
        continue;
      }
      for (const auto& s : r.sentences)
        for (const auto& w : s) ++word_freq[w];
      raws.push_back(std::move(r));
    }
  }

  // Vocabulary: top vocab_limit by frequency, ties lexicographic.
  {
    std::vector<std::pair<long, std::string>> ranked;
    ranked.reserve(word_freq.size());
    for (const auto& [w, c] : word_freq) ranked.push_back({c, w});
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (int i = 0; i < static_cast<int>(ranked.size()) && i < cfg.vocab_limit; ++i)
      out.corpus.vocab.add(ranked[i].second);
  }

  // Entity-keyword sentence co-occurrence counts, one per sentence.
  for (const RawReview& r : raws) {
    for (int si = 0; si < static_cast<int>(r.sentences.size()); ++si) {
      std::set<NodeId> ents, kws;
      for (const MentionSpan& m : r.mentions) {
        if (m.sentence != si) continue;
        if (out.nodes.kind(m.node) == NodeKind::kEntity) ents.insert(m.node);
        if (out.nodes.kind(m.node) == NodeKind::kKeyword) kws.insert(m.node);
      }
      for (NodeId e : ents)
        for (NodeId k : kws) ++out.cooccur_counts[{e, k}];
    }
  }

  out.hkg = build_hkg(out.nodes, out.rels, triples, interactions, out.cooccur_counts,
                      cfg.min_cooccur);

  // Materialize reviews with ids and copy indicators.
  for (const RawReview& r : raws) {
    Review rev;
    rev.ctx = r.ctx;
    for (const auto& s : r.sentences) {
      std::vector<int> ids;
      ids.reserve(s.size());
      for (const auto& w : s) ids.push_back(out.corpus.vocab.id(w));
      rev.doc.sentences.push_back(std::move(ids));
      rev.doc.copy_gen.emplace_back(s.size(), uint8_t{1});
    }
    for (const MentionSpan& m : r.mentions) {
      rev.doc.mentions.push_back(m);
      for (int p = m.start; p < m.start + m.len; ++p) rev.doc.copy_gen[m.sentence][p] = 0;
    }
    out.corpus.reviews.push_back(std::move(rev));
  }

  // Seeded 8:1:1 split by review.
  {
    const size_t n = out.corpus.reviews.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const size_t n_test = n / 10, n_valid = n / 10;
    for (size_t i = 0; i < n; ++i) {
      Split s = Split::kTrain;
      if (i < n_test) s = Split::kTest;
      else if (i < n_test + n_valid) s = Split::kValid;
      out.corpus.reviews[idx[i]].split = s;
    }
  }
  return out;
}

}  // namespace cetp
