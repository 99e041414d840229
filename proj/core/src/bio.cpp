#include "layoutlab/bio.hpp"

#include <algorithm>
#include <stdexcept>

namespace layoutlab {

std::vector<Mention> tags_to_spans(std::span<const std::string> tags) {
  std::vector<Mention> mentions;
  bool open = false;
  Mention current;
  const auto close = [&](std::size_t end) {
    if (open) {
      current.end = end;
      mentions.push_back(current);
      open = false;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const std::string& tag = tags[i];
    if (tag == "O") {
      close(i);
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') {
      throw std::runtime_error("unparseable tag \"" + tag + "\"");
    }
    const std::string_view label = std::string_view(tag).substr(2);
    if (tag[0] == 'I' && open && current.label == label) {
      continue;  // extends the open mention
    }
    close(i);
    current = Mention{i, i, std::string(label)};
    open = true;
  }
  close(tags.size());
  return mentions;
}

std::vector<std::string> spans_to_tags(std::span<const Mention> mentions,
                                       std::size_t length) {
  std::vector<Mention> sorted(mentions.begin(), mentions.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::string> tags(length, "O");
  std::size_t prev_end = 0;
  for (const Mention& m : sorted) {
    if (m.start >= m.end || m.end > length) {
      throw std::runtime_error("mention out of range");
    }
    if (m.start < prev_end) {
      throw std::runtime_error("overlapping mentions");
    }
    if (m.label.empty() || m.label == "O") {
      throw std::runtime_error("mention label must name a class");
    }
    tags[m.start] = "B-" + m.label;
    for (std::size_t i = m.start + 1; i < m.end; ++i) tags[i] = "I-" + m.label;
    prev_end = m.end;
  }
  return tags;
}

TagCodec::TagCodec(const LabelSet& labels) {
  names_.reserve(labels.tagset_size());
  names_.emplace_back("O");
  for (const auto& label : labels.labels()) {
    names_.push_back("B-" + label);
    names_.push_back("I-" + label);
  }
}

int TagCodec::index_of(std::string_view tag) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == tag) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace layoutlab
