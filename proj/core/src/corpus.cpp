#include "layoutlab/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

namespace layoutlab {

namespace {

using nlohmann::json;

[[noreturn]] void fail(std::string_view source, std::size_t line,
                       const std::string& what) {
  std::ostringstream os;
  os << source << ":" << line << ": " << what;
  throw std::runtime_error(os.str());
}

bool parse_tag_shape(std::string_view tag, std::string_view* label) {
  if (tag == "O") {
    *label = {};
    return true;
  }
  if (tag.size() >= 3 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') {
    *label = tag.substr(2);
    return true;
  }
  return false;
}

Page parse_page(const json& rec, std::string_view source, std::size_t line,
                const LabelSet* labels) {
  Page page;
  if (!rec.is_object()) fail(source, line, "record is not a JSON object");
  try {
    page.doc_id = rec.at("id").get<std::string>();
    page.width = rec.at("width").get<std::int64_t>();
    page.height = rec.at("height").get<std::int64_t>();
  } catch (const json::exception& e) {
    fail(source, line, std::string("bad page header: ") + e.what());
  }
  if (page.width <= 0 || page.height <= 0) {
    fail(source, line, "page dimensions must be positive");
  }

  const auto words_it = rec.find("words");
  if (words_it == rec.end() || !words_it->is_array()) {
    fail(source, line, "missing \"words\" array");
  }
  page.words.reserve(words_it->size());
  for (const auto& w : *words_it) {
    Word word;
    try {
      word.text = w.at("text").get<std::string>();
      const auto& b = w.at("box");
      if (!b.is_array() || b.size() != 4) {
        throw std::runtime_error("box must be [x0,y0,x1,y1]");
      }
      word.box.x0 = b[0].get<std::int64_t>();
      word.box.y0 = b[1].get<std::int64_t>();
      word.box.x1 = b[2].get<std::int64_t>();
      word.box.y1 = b[3].get<std::int64_t>();
    } catch (const std::exception& e) {
      fail(source, line, std::string("bad word record: ") + e.what());
    }
    if (word.text.empty()) fail(source, line, "empty word text");
    if (word.text.find('\n') != std::string::npos) {
      fail(source, line, "word text contains a newline");
    }
    const RawBox& b = word.box;
    if (b.x0 < 0 || b.y0 < 0 || b.x0 > b.x1 || b.y0 > b.y1 ||
        b.x1 > page.width || b.y1 > page.height) {
      std::ostringstream os;
      os << "box [" << b.x0 << "," << b.y0 << "," << b.x1 << "," << b.y1
         << "] outside page bounds " << page.width << "x" << page.height;
      fail(source, line, os.str());
    }
    page.words.push_back(std::move(word));
  }

  const auto tags_it = rec.find("tags");
  if (tags_it != rec.end() && !tags_it->is_null()) {
    if (!tags_it->is_array()) fail(source, line, "\"tags\" must be an array");
    std::vector<std::string> tags;
    tags.reserve(tags_it->size());
    for (const auto& t : *tags_it) {
      if (!t.is_string()) fail(source, line, "tag is not a string");
      tags.push_back(t.get<std::string>());
    }
    if (tags.size() != page.words.size()) {
      std::ostringstream os;
      os << "tag/word length mismatch (" << tags.size() << " tags, "
         << page.words.size() << " words)";
      fail(source, line, os.str());
    }
    for (const auto& tag : tags) {
      std::string_view label;
      if (!parse_tag_shape(tag, &label)) {
        fail(source, line, "unparseable tag \"" + tag + "\"");
      }
      if (labels != nullptr && !label.empty() && !labels->contains(label)) {
        fail(source, line, "unknown tag name \"" + tag + "\"");
      }
    }
    page.tags = std::move(tags);
  }
  return page;
}

}  // namespace

LabelSet::LabelSet(std::vector<std::string> labels) : labels_(std::move(labels)) {
  std::unordered_set<std::string_view> seen;
  for (const auto& name : labels_) {
    if (name.empty()) throw std::runtime_error("empty label name");
    if (name == "O") throw std::runtime_error("label name \"O\" is reserved");
    if (!seen.insert(name).second) {
      throw std::runtime_error("duplicate label name \"" + name + "\"");
    }
  }
}

LabelSet LabelSet::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open label file " + path);
  std::vector<std::string> labels;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) labels.push_back(line);
  }
  return LabelSet(std::move(labels));
}

bool LabelSet::contains(std::string_view label) const {
  return index_of(label) >= 0;
}

int LabelSet::index_of(std::string_view label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return static_cast<int>(i);
  }
  return -1;
}

BBox normalize_bbox(const RawBox& box, std::int64_t page_width,
                    std::int64_t page_height) {
  if (page_width <= 0 || page_height <= 0) {
    throw std::runtime_error("page dimensions must be positive");
  }
  if (box.x0 < 0 || box.y0 < 0 || box.x0 > box.x1 || box.y0 > box.y1 ||
      box.x1 > page_width || box.y1 > page_height) {
    throw std::runtime_error("box outside page bounds");
  }
  const auto map = [](std::int64_t c, std::int64_t d) {
    return static_cast<int>(std::clamp<std::int64_t>(c * 1000 / d, 0, 1000));
  };
  return BBox{map(box.x0, page_width), map(box.y0, page_height),
              map(box.x1, page_width), map(box.y1, page_height)};
}

std::vector<Page> parse_corpus(const std::string& path, const LabelSet& labels) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  return parse_corpus(in, path, &labels);
}

std::vector<Page> parse_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file " + path);
  return parse_corpus(in, path, nullptr);
}

std::vector<Page> parse_corpus(std::istream& in, std::string_view source_name,
                               const LabelSet* labels) {
  std::vector<Page> pages;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      fail(source_name, line_no, std::string("malformed JSON: ") + e.what());
    }
    pages.push_back(parse_page(rec, source_name, line_no, labels));
  }
  return pages;
}

void write_corpus(std::span<const Page> pages, const std::string& path) {
  std::ofstream out(path, std::ios::binary);  // binary keeps LF framing
  if (!out) throw std::runtime_error("cannot open output file " + path);
  write_corpus(pages, out);
}

void write_corpus(std::span<const Page> pages, std::ostream& out) {
  for (const Page& page : pages) {
    json rec;
    rec["id"] = page.doc_id;
    rec["width"] = page.width;
    rec["height"] = page.height;
    json words = json::array();
    for (const Word& w : page.words) {
      words.push_back({{"text", w.text},
                       {"box", {w.box.x0, w.box.y0, w.box.x1, w.box.y1}}});
    }
    rec["words"] = std::move(words);
    if (page.tags) rec["tags"] = *page.tags;
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("corpus write failed");
}

LabelStats label_stats(std::span<const Page> pages, const LabelSet& labels) {
  LabelStats stats;
  stats.per_label.reserve(labels.size());
  for (const auto& name : labels.labels()) stats.per_label.emplace_back(name, 0);
  for (const Page& page : pages) {
    if (!page.tags) {
      throw std::runtime_error("untagged page \"" + page.doc_id +
                               "\" in label_stats");
    }
    for (const std::string& tag : *page.tags) {
      ++stats.total;
      if (tag == "O") {
        ++stats.outside;
        continue;
      }
      const std::string_view label = std::string_view(tag).substr(2);
      const int idx = labels.index_of(label);
      if (idx < 0) {
        throw std::runtime_error("unknown tag name \"" + tag + "\"");
      }
      ++stats.per_label[static_cast<std::size_t>(idx)].second;
    }
  }
  return stats;
}

}  // namespace layoutlab
