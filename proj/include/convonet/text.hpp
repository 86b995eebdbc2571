#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "convonet/csv.hpp"
#include "convonet/tensor.hpp"

namespace convonet {

class Vocabulary {
 public:
  // Returns the token's index, inserting it if new.
  std::size_t add(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    std::size_t id = tokens_.size();
    index_.emplace(token, id);
    tokens_.push_back(token);
    return id;
  }

  // -1 when absent.
  long lookup(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? -1 : static_cast<long>(it->second);
  }

  const std::string& token(std::size_t id) const { return tokens_[id]; }
  std::size_t size() const { return tokens_.size(); }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> tokens_;
};

// Frozen pre-trained word vectors, GloVe text format. Read-only after load.
struct EmbeddingTable {
  Vocabulary vocabulary;
  Tensor vectors;  // rank-2, V x z
  std::size_t dimension = 0;

  const float* row(std::size_t id) const {
    return vectors.data() + id * dimension;
  }
};

// One line per token: the token followed by z whitespace-separated reals.
// z is inferred from the first line; duplicate tokens keep the first entry.
inline EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open embeddings file: " + path);

  EmbeddingTable table;
  std::vector<float> flat;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    std::vector<float> vec;
    double v;
    while (ls >> v) vec.push_back(static_cast<float>(v));
    if (!ls.eof())
      throw InputError(path + ": malformed number at line " +
                       std::to_string(line_no));
    if (table.dimension == 0) {
      if (vec.empty())
        throw InputError(path + ": no embedding values at line " +
                         std::to_string(line_no));
      table.dimension = vec.size();
    } else if (vec.size() != table.dimension) {
      throw InputError(path + ": expected " +
                       std::to_string(table.dimension) + " values, got " +
                       std::to_string(vec.size()) + " at line " +
                       std::to_string(line_no));
    }
    if (table.vocabulary.lookup(token) >= 0) continue;  // first wins
    table.vocabulary.add(token);
    flat.insert(flat.end(), vec.begin(), vec.end());
  }
  if (table.vocabulary.size() == 0)
    throw InputError(path + ": empty embeddings file");
  table.vectors =
      Tensor({table.vocabulary.size(), table.dimension}, std::move(flat));
  return table;
}

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}
}  // namespace detail

// Splits at '.', '!', '?' when followed by whitespace or end-of-text.
// The terminator is dropped, fragments are trimmed, empties removed.
// Abbreviations are not special-cased ("Dr. who" splits).
inline std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    std::string t = detail::trim(cur);
    if (!t.empty()) out.push_back(std::move(t));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool terminator = (c == '.' || c == '!' || c == '?');
    bool at_boundary =
        terminator &&
        (i + 1 == text.size() ||
         std::isspace(static_cast<unsigned char>(text[i + 1])));
    if (at_boundary)
      flush();
    else
      cur.push_back(c);
  }
  flush();
  return out;
}

// Lowercases (ASCII), splits punctuation off as single-character tokens,
// collapses whitespace. Bytes above 0x7F pass through untouched.
inline std::vector<std::string> tokenize(const std::string& sentence) {
  std::vector<std::string> toks;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      toks.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : sentence) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c < 128 && std::isspace(c)) {
      flush();
    } else if (c < 128 && std::ispunct(c)) {
      flush();
      toks.emplace_back(1, ch);
    } else {
      cur.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  flush();
  return toks;
}

// The m x n x z paragraph matrix plus how much of it is real text. Rows at
// sentence index >= real_sentence_count and columns past each sentence's
// real_word_counts entry hold exact zero vectors.
template <typename T>
struct ParagraphTensorT {
  TensorT<T> data;
  std::size_t real_sentence_count = 0;
  std::vector<std::size_t> real_word_counts;
};

using ParagraphTensor = ParagraphTensorT<float>;

// First m sentences kept, first n tokens per sentence kept. In-vocabulary
// tokens get their embedding row; OOV tokens and padding stay zero.
// single_sequence treats the whole text as one sentence (the 1-D baseline).
template <typename T = float>
ParagraphTensorT<T> build_paragraph(const std::string& text,
                                    const EmbeddingTable& emb, std::size_t m,
                                    std::size_t n,
                                    bool single_sequence = false) {
  if (m == 0 || n == 0)
    throw std::invalid_argument("build_paragraph: m and n must be >= 1");
  ParagraphTensorT<T> out;
  out.data = TensorT<T>({m, n, emb.dimension}, T(0));
  out.real_word_counts.assign(m, 0);

  std::vector<std::string> sentences;
  if (single_sequence)
    sentences.push_back(text);
  else
    sentences = split_sentences(text);
  out.real_sentence_count = std::min(sentences.size(), m);

  for (std::size_t si = 0; si < out.real_sentence_count; ++si) {
    std::vector<std::string> toks = tokenize(sentences[si]);
    std::size_t count = std::min(toks.size(), n);
    out.real_word_counts[si] = count;
    for (std::size_t wi = 0; wi < count; ++wi) {
      long id = emb.vocabulary.lookup(toks[wi]);
      if (id < 0) continue;  // OOV stays zero
      const float* src = emb.row(static_cast<std::size_t>(id));
      T* dst = out.data.data() + (si * n + wi) * emb.dimension;
      for (std::size_t k = 0; k < emb.dimension; ++k)
        dst[k] = static_cast<T>(src[k]);
    }
  }
  return out;
}

struct LabeledExample {
  std::string text;
  std::size_t label = 0;
};

// One CSV file's worth of examples with its own sorted label order.
struct LoadedDataset {
  std::vector<LabeledExample> examples;
  std::vector<std::string> class_names;
};

struct DatasetSplit {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<std::string> class_names;
};

// CSV with header columns "text" and "label" (any order, extras ignored).
// class_names is the sorted set of distinct labels; indices follow it.
inline LoadedDataset load_dataset(const std::string& path) {
  CsvReader reader(path);
  std::vector<std::string> header;
  if (!reader.next(header)) throw InputError(path + ": empty file");

  long text_col = -1, label_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "text") text_col = static_cast<long>(i);
    if (header[i] == "label") label_col = static_cast<long>(i);
  }
  if (text_col < 0) throw InputError(path + ": missing column \"text\"");
  if (label_col < 0) throw InputError(path + ": missing column \"label\"");

  std::vector<std::pair<std::string, std::string>> raw;  // (text, label)
  std::set<std::string> labels;
  std::vector<std::string> row;
  std::size_t row_no = 1;
  while (reader.next(row)) {
    ++row_no;
    std::size_t need =
        static_cast<std::size_t>(std::max(text_col, label_col)) + 1;
    if (row.size() < need)
      throw InputError(path + ": row " + std::to_string(row_no) +
                       " has too few fields");
    raw.emplace_back(row[static_cast<std::size_t>(text_col)],
                     row[static_cast<std::size_t>(label_col)]);
    labels.insert(raw.back().second);
  }
  if (raw.empty()) throw InputError(path + ": no data rows");

  LoadedDataset out;
  out.class_names.assign(labels.begin(), labels.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.class_names.size(); ++i)
    index[out.class_names[i]] = i;
  out.examples.reserve(raw.size());
  for (auto& [text, label] : raw)
    out.examples.push_back({std::move(text), index[label]});
  return out;
}

// Merges two loaded files into one split with a shared label order.
inline DatasetSplit make_split(const LoadedDataset& train,
                               const LoadedDataset& test) {
  std::set<std::string> labels(train.class_names.begin(),
                               train.class_names.end());
  labels.insert(test.class_names.begin(), test.class_names.end());
  DatasetSplit split;
  split.class_names.assign(labels.begin(), labels.end());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split.class_names.size(); ++i)
    index[split.class_names[i]] = i;
  auto remap = [&](const LoadedDataset& src) {
    std::vector<LabeledExample> out;
    out.reserve(src.examples.size());
    for (const auto& ex : src.examples)
      out.push_back({ex.text, index.at(src.class_names[ex.label])});
    return out;
  };
  split.train = remap(train);
  split.test = remap(test);
  return split;
}

// Fraction of examples whose token length strictly exceeds the mean length.
inline double exceeding_ratio(const std::vector<std::size_t>& lengths) {
  if (lengths.empty())
    throw std::invalid_argument("exceeding_ratio: empty example list");
  double mean = 0.0;
  for (std::size_t l : lengths) mean += static_cast<double>(l);
  mean /= static_cast<double>(lengths.size());
  std::size_t above = 0;
  for (std::size_t l : lengths)
    if (static_cast<double>(l) > mean) ++above;
  return static_cast<double>(above) / static_cast<double>(lengths.size());
}

inline std::size_t token_length(const LabeledExample& ex) {
  return tokenize(ex.text).size();
}

inline double exceeding_ratio(const std::vector<LabeledExample>& examples) {
  std::vector<std::size_t> lengths;
  lengths.reserve(examples.size());
  for (const auto& ex : examples) lengths.push_back(token_length(ex));
  return exceeding_ratio(lengths);
}

// Corpus maxima: m = most sentences in any example, n = longest sentence in
// tokens. With single_sequence each example counts as one sentence.
inline std::pair<std::size_t, std::size_t> infer_dims(
    const std::vector<LabeledExample>& train, bool single_sequence = false) {
  if (train.empty()) throw std::invalid_argument("infer_dims: empty list");
  std::size_t m = 1, n = 1;
  for (const auto& ex : train) {
    std::vector<std::string> sentences;
    if (single_sequence)
      sentences.push_back(ex.text);
    else
      sentences = split_sentences(ex.text);
    m = std::max(m, sentences.size());
    for (const auto& s : sentences) n = std::max(n, tokenize(s).size());
  }
  return {m, n};
}

// m-study scaling; ceiling guarantees at least one sentence at small fractions.
inline std::size_t scaled_m(std::size_t m, double fraction) {
  return static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(m)));
}

// Everything the evaluator needs to turn raw text into model input.
struct PipelineContext {
  const EmbeddingTable* embeddings = nullptr;
  std::size_t m = 1;
  std::size_t n = 1;
  bool single_sequence = false;
};

struct DatasetStats {
  std::size_t example_count = 0;
  std::vector<std::pair<std::string, std::size_t>> class_histogram;
  std::size_t vocabulary_size = 0;
  double exceeding = 0.0;
  std::size_t max_sentences = 0;   // per example
  double mean_sentences = 0.0;
  std::size_t max_sentence_tokens = 0;  // longest single sentence
  std::size_t max_tokens = 0;      // per example
  double mean_tokens = 0.0;
};

inline DatasetStats compute_stats(const LoadedDataset& ds) {
  DatasetStats st;
  st.example_count = ds.examples.size();
  std::vector<std::size_t> per_class(ds.class_names.size(), 0);
  Vocabulary vocab;
  std::vector<std::size_t> lengths;
  double sent_sum = 0.0, tok_sum = 0.0;
  for (const auto& ex : ds.examples) {
    ++per_class[ex.label];
    auto sentences = split_sentences(ex.text);
    st.max_sentences = std::max(st.max_sentences, sentences.size());
    sent_sum += static_cast<double>(sentences.size());
    std::size_t tokens = 0;
    for (const auto& s : sentences) {
      auto toks = tokenize(s);
      st.max_sentence_tokens = std::max(st.max_sentence_tokens, toks.size());
      for (const auto& t : toks) vocab.add(t);
      tokens += toks.size();
    }
    st.max_tokens = std::max(st.max_tokens, tokens);
    // terminator punctuation never reaches tokenize; use the full text length
    lengths.push_back(token_length(ex));
    tok_sum += static_cast<double>(tokens);
  }
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    st.class_histogram.emplace_back(ds.class_names[i], per_class[i]);
  st.vocabulary_size = vocab.size();
  st.exceeding = exceeding_ratio(lengths);
  st.mean_sentences = sent_sum / static_cast<double>(st.example_count);
  st.mean_tokens = tok_sum / static_cast<double>(st.example_count);
  return st;
}

}  // namespace convonet
