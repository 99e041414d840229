#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "layoutlab/model.hpp"
#include "layoutlab/vocab.hpp"

namespace layoutlab {

// Named-tensor weight container. On disk (see save/load): magic "LNLB",
// version u16, a length-prefixed UTF-8 metadata block of key=value lines
// (ModelConfig fields plus the vocabulary fingerprint), then one record per
// tensor: length-prefixed name, rank u8, dims u64[], IEEE-754 32-bit
// little-endian row-major payload.
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint64_t vocab_size = 0;
  std::vector<std::string> ner_labels;  // empty when no NER head
  std::vector<std::pair<std::string, Tensor<float>>> tensors;

  const Tensor<float>* find(std::string_view name) const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  // Throws unless the fingerprint matches; called before fine-tune/eval.
  void require_vocab(const Vocab& vocab) const;
};

// Keeps the embeddings, the bottom k layers, and the heads; the result's
// config has layers = k.
Checkpoint truncate_layers(const Checkpoint& ckpt, std::size_t k);

template <typename T>
Checkpoint to_checkpoint(const Model<T>& model, const Vocab& vocab);

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt);

extern template Checkpoint to_checkpoint(const Model<float>&, const Vocab&);
extern template Checkpoint to_checkpoint(const Model<double>&, const Vocab&);
extern template Model<float> model_from_checkpoint(const Checkpoint&);
extern template Model<double> model_from_checkpoint(const Checkpoint&);

}  // namespace layoutlab
