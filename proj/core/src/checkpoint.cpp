#include "layoutlab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace layoutlab {

namespace {

constexpr char kMagic[4] = {'L', 'N', 'L', 'B'};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw std::runtime_error(std::string("checkpoint truncated at ") + what);
  return value;
}

void write_string(std::ostream& out, std::string_view s) {
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const char* what) {
  const auto len = read_pod<std::uint32_t>(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error(std::string("checkpoint truncated at ") + what);
  return s;
}

std::string join_labels(const std::vector<std::string>& labels) {
  std::string out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (i > 0) out += ',';
    out += labels[i];
  }
  return out;
}

std::vector<std::string> split_labels(const std::string& joined) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(joined);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

const Tensor<float>* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint file " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<std::uint16_t>(out, kVersion);

  std::ostringstream meta;
  meta << model_config_text(config);
  meta << "vocab_hash = " << vocab_hash << "\n";
  meta << "vocab_count = " << vocab_size << "\n";
  if (!ner_labels.empty()) meta << "ner_labels = " << join_labels(ner_labels) << "\n";
  write_string(out, meta.str());

  for (const auto& [name, tensor] : tensors) {
    write_string(out, name);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(tensor.rank()));
    for (std::size_t d = 0; d < tensor.rank(); ++d) {
      write_pod<std::uint64_t>(out, tensor.dim(d));
    }
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(tensor.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint file " + path);
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  const auto version = read_pod<std::uint16_t>(in, "version");
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version));
  }

  Checkpoint ckpt;
  const std::string meta = read_string(in, "metadata");
  std::string config_lines;
  std::istringstream meta_in(meta);
  std::string line;
  while (std::getline(meta_in, line)) {
    const auto eq = line.find('=');
    const std::string key = eq == std::string::npos ? line : line.substr(0, eq);
    const auto strip = [](std::string s) {
      while (!s.empty() && s.back() == ' ') s.pop_back();
      while (!s.empty() && s.front() == ' ') s.erase(s.begin());
      return s;
    };
    const std::string k = strip(key);
    if (k == "vocab_hash") {
      ckpt.vocab_hash = std::stoull(strip(line.substr(eq + 1)));
    } else if (k == "vocab_count") {
      ckpt.vocab_size = std::stoull(strip(line.substr(eq + 1)));
    } else if (k == "ner_labels") {
      ckpt.ner_labels = split_labels(strip(line.substr(eq + 1)));
    } else {
      config_lines += line;
      config_lines += '\n';
    }
  }
  ckpt.config = parse_model_config_text(config_lines, path + "#metadata");
  ckpt.config.validate();

  while (in.peek() != std::char_traits<char>::eof()) {
    const std::string name = read_string(in, "tensor name");
    const auto rank = read_pod<std::uint8_t>(in, "tensor rank");
    std::vector<std::size_t> dims(rank);
    for (auto& d : dims) {
      d = static_cast<std::size_t>(read_pod<std::uint64_t>(in, "tensor dims"));
    }
    Tensor<float> t(dims);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint truncated in tensor " + name);
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  return ckpt;
}

void Checkpoint::require_vocab(const Vocab& vocab) const {
  if (vocab.fingerprint() != vocab_hash || vocab.size() != vocab_size) {
    throw std::runtime_error(
        "vocabulary fingerprint mismatch: checkpoint was trained with a "
        "different vocabulary");
  }
}

Checkpoint truncate_layers(const Checkpoint& ckpt, std::size_t k) {
  if (k < 1 || k > ckpt.config.layers) {
    throw std::runtime_error("truncation depth out of range");
  }
  Checkpoint out;
  out.config = ckpt.config;
  out.config.layers = k;
  out.vocab_hash = ckpt.vocab_hash;
  out.vocab_size = ckpt.vocab_size;
  out.ner_labels = ckpt.ner_labels;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (name.rfind("layer", 0) == 0) {
      const auto dot = name.find('.');
      const std::size_t index = std::stoull(name.substr(5, dot - 5));
      if (index >= k) continue;
    }
    out.tensors.emplace_back(name, tensor);
  }
  return out;
}

template <typename T>
Checkpoint to_checkpoint(const Model<T>& model, const Vocab& vocab) {
  if (model.config().vocab_size != vocab.size()) {
    throw std::runtime_error("model/vocabulary size mismatch");
  }
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.vocab_hash = vocab.fingerprint();
  ckpt.vocab_size = vocab.size();
  ckpt.ner_labels = model.ner_labels();
  for (const Parameter<T>* p : model.parameters()) {
    Tensor<float> t(p->value.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<float>(p->value[i]);
    }
    ckpt.tensors.emplace_back(p->name, std::move(t));
  }
  return ckpt;
}

template <typename T>
Model<T> model_from_checkpoint(const Checkpoint& ckpt) {
  // Build the full parameter skeleton, then overwrite every tensor from the
  // checkpoint; missing or mis-shaped tensors are errors.
  RngStream scratch(0);
  Model<T> model = Model<T>::random_init(ckpt.config, scratch);
  if (!ckpt.ner_labels.empty()) {
    model.init_ner_head(ckpt.ner_labels, scratch);
  }
  std::size_t used = 0;
  for (Parameter<T>* p : model.parameters()) {
    const Tensor<float>* stored = ckpt.find(p->name);
    if (stored == nullptr) {
      throw std::runtime_error("checkpoint is missing tensor " + p->name);
    }
    if (stored->shape() != p->value.shape()) {
      throw std::runtime_error("checkpoint tensor " + p->name +
                               " has mismatched dimensions");
    }
    for (std::size_t i = 0; i < stored->size(); ++i) {
      p->value[i] = static_cast<T>((*stored)[i]);
    }
    ++used;
  }
  if (used != ckpt.tensors.size()) {
    throw std::runtime_error("checkpoint holds unexpected extra tensors");
  }
  return model;
}

template Checkpoint to_checkpoint(const Model<float>&, const Vocab&);
template Checkpoint to_checkpoint(const Model<double>&, const Vocab&);
template Model<float> model_from_checkpoint(const Checkpoint&);
template Model<double> model_from_checkpoint(const Checkpoint&);

}  // namespace layoutlab
