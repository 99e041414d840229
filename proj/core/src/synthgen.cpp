#include "layoutlab/synthgen.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "layoutlab/rng.hpp"

namespace layoutlab {

namespace {

constexpr std::int64_t kPageWidth = 850;
constexpr std::int64_t kPageHeight = 1100;
constexpr std::size_t kWordsPerRow = 8;

const std::vector<std::string>& outside_pool() {
  static const std::vector<std::string> kPool = {
      "employee", "employer",  "pay",     "slip",      "period",   "date",
      "gross",    "net",       "tax",     "super",     "total",    "amount",
      "rate",     "hours",     "leave",   "ytd",       "abn",      "ref",
      "bank",     "account",   "deduction", "earnings", "allowance", "overtime",
      "annual",   "balance",   "company", "pty",       "ltd",      "payment",
      "salary",   "base",      "code",    "dept",      "fund",     "member",
      "week",     "fortnight", "month",   "loading",   "pre",      "post",
      "taxable",  "units",     "per",     "summary"};
  return kPool;
}

std::string amount_text(RngStream& rng) {
  std::ostringstream os;
  os << rng.next_below(9) + 1;
  if (rng.next_bernoulli(0.4)) os << "," << 100 + rng.next_below(900);
  else os << 10 + rng.next_below(90);
  os << "." << 10 + rng.next_below(90);
  return os.str();
}

std::string date_text(RngStream& rng) {
  std::ostringstream os;
  os << 10 + rng.next_below(19) << "/" << 10 + rng.next_below(2) << "/"
     << 2019 + rng.next_below(6);
  return os.str();
}

std::string labeled_text(const std::string& label, RngStream& rng) {
  if (label == "PAY_DATE" || label == "BEGIN_PAY_PERIOD" ||
      label == "END_PAY_PERIOD") {
    return date_text(rng);
  }
  return amount_text(rng);
}

// Row-major grid layout within the page.
RawBox grid_box(std::size_t index) {
  const std::size_t row = index / kWordsPerRow;
  const std::size_t col = index % kWordsPerRow;
  const std::int64_t x0 = 20 + static_cast<std::int64_t>(col) * 102;
  const std::int64_t y0 = 24 + static_cast<std::int64_t>(row) * 22;
  return RawBox{x0, y0, x0 + 88, y0 + 16};
}

struct MentionPlan {
  std::string label;
  std::size_t length = 0;
};

}  // namespace

LabelSet payslip_labels() {
  return LabelSet({"BEGIN_PAY_PERIOD", "END_PAY_PERIOD", "PAY_DATE",
                   "GROSS_PAY_PERIOD", "GROSS_TAXABLE_PERIOD",
                   "NET_PAY_PERIOD", "PAYG_TAX_PERIOD",
                   "PRE_TAX_DEDUCTION_PERIOD", "POST_TAX_DEDUCTION_PERIOD"});
}

std::size_t SplitTargets::labeled_words() const {
  std::size_t sum = 0;
  for (const auto& [label, count] : label_words) sum += count;
  return sum;
}

SplitTargets payslip_train_targets() {
  SplitTargets t;
  t.label_words = {{"BEGIN_PAY_PERIOD", 236},
                   {"END_PAY_PERIOD", 388},
                   {"PAY_DATE", 461},
                   {"GROSS_PAY_PERIOD", 481},
                   {"GROSS_TAXABLE_PERIOD", 245},
                   {"NET_PAY_PERIOD", 444},
                   {"PAYG_TAX_PERIOD", 499},
                   {"PRE_TAX_DEDUCTION_PERIOD", 278},
                   {"POST_TAX_DEDUCTION_PERIOD", 243}};
  t.total_words = 63871;
  t.pages = 485;
  return t;
}

SplitTargets payslip_test_targets() {
  SplitTargets t;
  t.label_words = {{"BEGIN_PAY_PERIOD", 85},
                   {"END_PAY_PERIOD", 100},
                   {"PAY_DATE", 101},
                   {"GROSS_PAY_PERIOD", 117},
                   {"GROSS_TAXABLE_PERIOD", 90},
                   {"NET_PAY_PERIOD", 109},
                   {"PAYG_TAX_PERIOD", 119},
                   {"PRE_TAX_DEDUCTION_PERIOD", 68},
                   {"POST_TAX_DEDUCTION_PERIOD", 67}};
  t.total_words = 24084;
  t.pages = 126;
  return t;
}

std::vector<Page> make_payslip_split(const SplitTargets& targets,
                                     std::uint64_t seed,
                                     const std::string& id_prefix) {
  if (targets.pages == 0 || targets.total_words < targets.labeled_words()) {
    throw std::runtime_error("inconsistent split targets");
  }
  RngStream rng = derive_stream(seed, "payslip-split");

  // Break each label's word budget into mention blocks of 1..3 words.
  std::vector<MentionPlan> mentions;
  for (const auto& [label, budget] : targets.label_words) {
    std::size_t remaining = budget;
    while (remaining > 0) {
      const std::size_t len = std::min<std::size_t>(remaining, 1 + rng.next_below(3));
      mentions.push_back({label, len});
      remaining -= len;
    }
  }
  rng.shuffle(mentions);

  // Per-page word budgets: near-equal split of the total.
  std::vector<std::size_t> budget(targets.pages,
                                  targets.total_words / targets.pages);
  for (std::size_t i = 0; i < targets.total_words % targets.pages; ++i) {
    ++budget[i];
  }

  // Assign mention blocks cyclically wherever they still fit.
  std::vector<std::vector<MentionPlan>> page_mentions(targets.pages);
  std::vector<std::size_t> used(targets.pages, 0);
  std::size_t cursor = 0;
  for (const MentionPlan& m : mentions) {
    std::size_t tried = 0;
    while (used[cursor] + m.length > budget[cursor]) {
      cursor = (cursor + 1) % targets.pages;
      if (++tried > targets.pages) {
        throw std::runtime_error("split targets leave no room for mentions");
      }
    }
    page_mentions[cursor].push_back(m);
    used[cursor] += m.length;
    cursor = (cursor + 1) % targets.pages;
  }

  std::vector<Page> pages;
  pages.reserve(targets.pages);
  const auto& pool = outside_pool();
  for (std::size_t p = 0; p < targets.pages; ++p) {
    // Blocks: one per mention plus one per O word, shuffled.
    struct Block {
      int mention = -1;  // index into page_mentions[p], or -1 for an O word
    };
    std::vector<Block> blocks;
    blocks.reserve(budget[p]);
    for (std::size_t m = 0; m < page_mentions[p].size(); ++m) {
      blocks.push_back({static_cast<int>(m)});
    }
    for (std::size_t o = 0; o < budget[p] - used[p]; ++o) blocks.push_back({});
    rng.shuffle(blocks);

    Page page;
    std::ostringstream id;
    id << id_prefix << "-" << p;
    page.doc_id = id.str();
    page.width = kPageWidth;
    page.height = kPageHeight;
    std::vector<std::string> tags;
    for (const Block& block : blocks) {
      if (block.mention < 0) {
        page.words.push_back(
            {pool[rng.next_below(pool.size())], grid_box(page.words.size())});
        tags.emplace_back("O");
        continue;
      }
      const MentionPlan& m =
          page_mentions[p][static_cast<std::size_t>(block.mention)];
      for (std::size_t i = 0; i < m.length; ++i) {
        page.words.push_back(
            {labeled_text(m.label, rng), grid_box(page.words.size())});
        tags.push_back((i == 0 ? "B-" : "I-") + m.label);
      }
    }
    page.tags = std::move(tags);
    pages.push_back(std::move(page));
  }

  // The whole point of the fixture is exact counts; verify before returning.
  LabelStats stats = label_stats(pages, payslip_labels());
  if (stats.total != targets.total_words ||
      stats.outside != targets.outside_words()) {
    throw std::runtime_error("fixture generation lost words");
  }
  for (std::size_t i = 0; i < targets.label_words.size(); ++i) {
    if (stats.per_label[i].second != targets.label_words[i].second) {
      throw std::runtime_error("fixture count mismatch for " +
                               targets.label_words[i].first);
    }
  }
  return pages;
}

std::vector<Page> make_mlm_toy(std::uint64_t seed, std::size_t pages,
                               std::size_t distinct_pairs,
                               std::size_t repeats) {
  static const char* kKeys[] = {
      "alpha", "bravo", "charlie", "delta",  "echo",   "foxtrot", "golf",
      "hotel", "india", "juliet",  "kilo",   "lima",   "mike",    "november",
      "oscar", "papa",  "quebec",  "romeo",  "sierra", "tango",   "uniform",
      "victor", "whiskey", "xray", "yankee", "zulu"};
  constexpr std::size_t kMaxPairs = std::size(kKeys) * 2;
  if (distinct_pairs == 0 || distinct_pairs > kMaxPairs) {
    throw std::runtime_error("distinct_pairs out of range");
  }
  RngStream rng = derive_stream(seed, "mlm-toy");
  std::vector<Page> out;
  out.reserve(pages);
  for (std::size_t p = 0; p < pages; ++p) {
    Page page;
    page.doc_id = "mlm-" + std::to_string(p);
    page.width = kPageWidth;
    page.height = kPageHeight;
    // A handful of pairs per page, each repeated; copies make every masked
    // token recoverable from an intact sibling.
    std::vector<std::size_t> chosen;
    const std::size_t per_page = std::min<std::size_t>(8, distinct_pairs);
    while (chosen.size() < per_page) {
      const std::size_t pair = rng.next_below(distinct_pairs);
      if (std::find(chosen.begin(), chosen.end(), pair) == chosen.end()) {
        chosen.push_back(pair);
      }
    }
    std::vector<std::size_t> sequence;
    for (std::size_t r = 0; r < repeats; ++r) {
      for (const std::size_t pair : chosen) sequence.push_back(pair);
    }
    rng.shuffle(sequence);
    for (const std::size_t pair : sequence) {
      const std::string key = std::string(kKeys[pair % std::size(kKeys)]) +
                              (pair >= std::size(kKeys) ? "2" : "");
      const std::string value = std::to_string(100 + pair);
      page.words.push_back({key, grid_box(page.words.size())});
      page.words.push_back({value, grid_box(page.words.size())});
    }
    out.push_back(std::move(page));
  }
  return out;
}

std::vector<Page> make_ner_toy(std::uint64_t seed, std::size_t pages,
                               std::size_t mentions_per_page) {
  const LabelSet labels = payslip_labels();
  RngStream rng = derive_stream(seed, "ner-toy");
  std::vector<Page> out;
  out.reserve(pages);
  for (std::size_t p = 0; p < pages; ++p) {
    Page page;
    page.doc_id = "ner-" + std::to_string(p);
    page.width = kPageWidth;
    page.height = kPageHeight;
    std::vector<std::string> tags;
    const auto& pool = outside_pool();
    for (std::size_t m = 0; m < mentions_per_page; ++m) {
      // separator run of O words
      const std::size_t gap = 1 + rng.next_below(3);
      for (std::size_t g = 0; g < gap; ++g) {
        page.words.push_back(
            {pool[rng.next_below(pool.size())], grid_box(page.words.size())});
        tags.emplace_back("O");
      }
      const std::size_t label_idx = rng.next_below(labels.size());
      const std::string& label = labels.labels()[label_idx];
      // Disjoint per-label token pool makes the tagging memorizable.
      const std::size_t len = 1 + rng.next_below(2);
      for (std::size_t i = 0; i < len; ++i) {
        const std::string text =
            "f" + std::to_string(label_idx) + "x" + std::to_string(rng.next_below(4));
        page.words.push_back({text, grid_box(page.words.size())});
        tags.push_back((i == 0 ? "B-" : "I-") + label);
      }
    }
    page.tags = std::move(tags);
    out.push_back(std::move(page));
  }
  return out;
}

}  // namespace layoutlab
