#include "hmn/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "hmn/error.hpp"

namespace hmn {
namespace {

constexpr int kMaxOrder = 4;
constexpr double kRougeBeta2 = 1.2 * 1.2;

void require_valid(const EvalCorpus& corpus, const char* metric) {
  if (corpus.empty()) {
    throw ValueError(std::string(metric) + " needs a nonempty corpus");
  }
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].references.empty()) {
      throw ValueError(std::string(metric) + ": video " + std::to_string(i) +
                       " has no references");
    }
  }
}

// N-grams are joined with a separator no caption token contains.
std::map<std::string, int> ngram_counts(const std::vector<std::string>& tokens,
                                        int n) {
  std::map<std::string, int> counts;
  if (static_cast<int>(tokens.size()) < n) return counts;
  for (std::size_t start = 0; start + n <= tokens.size(); ++start) {
    std::string key = tokens[start];
    for (int k = 1; k < n; ++k) {
      key += '\x1f';
      key += tokens[start + k];
    }
    ++counts[key];
  }
  return counts;
}

int lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  const std::size_t rows = a.size();
  const std::size_t cols = b.size();
  if (rows == 0 || cols == 0) return 0;
  std::vector<int> prev(cols + 1, 0);
  std::vector<int> curr(cols + 1, 0);
  for (std::size_t i = 1; i <= rows; ++i) {
    for (std::size_t j = 1; j <= cols; ++j) {
      curr[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                     : std::max(prev[j], curr[j - 1]);
    }
    std::swap(prev, curr);
  }
  return prev[cols];
}

}  // namespace

double bleu4(const EvalCorpus& corpus) {
  require_valid(corpus, "bleu4");
  long long matches[kMaxOrder] = {0, 0, 0, 0};
  long long totals[kMaxOrder] = {0, 0, 0, 0};
  long long candidate_len = 0;
  long long effective_ref_len = 0;

  for (const EvalEntry& entry : corpus) {
    const long long c = static_cast<long long>(entry.candidate.size());
    candidate_len += c;
    // Closest reference length; ties go to the shorter reference.
    long long best = static_cast<long long>(entry.references[0].size());
    for (const auto& ref : entry.references) {
      const long long r = static_cast<long long>(ref.size());
      const long long d_new = std::llabs(r - c);
      const long long d_old = std::llabs(best - c);
      if (d_new < d_old || (d_new == d_old && r < best)) best = r;
    }
    effective_ref_len += best;

    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto cand = ngram_counts(entry.candidate, n);
      std::map<std::string, int> ceiling;
      for (const auto& ref : entry.references) {
        for (const auto& [key, count] : ngram_counts(ref, n)) {
          int& cap = ceiling[key];
          cap = std::max(cap, count);
        }
      }
      for (const auto& [key, count] : cand) {
        totals[n - 1] += count;
        auto it = ceiling.find(key);
        if (it != ceiling.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (candidate_len == 0) return 0.0;

  double log_sum = 0.0;
  for (int n = 1; n <= kMaxOrder; ++n) {
    double m = static_cast<double>(matches[n - 1]);
    double t = static_cast<double>(totals[n - 1]);
    if (n >= 2) {  // add-one smoothing on the counts
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0) return 0.0;
    log_sum += std::log(m / t) / kMaxOrder;
  }
  const double bp =
      candidate_len >= effective_ref_len
          ? 1.0
          : std::exp(1.0 - static_cast<double>(effective_ref_len) /
                               static_cast<double>(candidate_len));
  return bp * std::exp(log_sum);
}

double rouge_l(const EvalCorpus& corpus) {
  require_valid(corpus, "rouge_l");
  double sum = 0.0;
  for (const EvalEntry& entry : corpus) {
    double best = 0.0;
    for (const auto& ref : entry.references) {
      const int lcs = lcs_length(entry.candidate, ref);
      if (lcs == 0 || entry.candidate.empty() || ref.empty()) continue;
      const double precision = static_cast<double>(lcs) / entry.candidate.size();
      const double recall = static_cast<double>(lcs) / ref.size();
      const double f = (1.0 + kRougeBeta2) * precision * recall /
                       (recall + kRougeBeta2 * precision);
      best = std::max(best, f);
    }
    sum += best;
  }
  return sum / static_cast<double>(corpus.size());
}

double cider(const EvalCorpus& corpus) {
  require_valid(corpus, "cider");
  const int m_videos = static_cast<int>(corpus.size());
  if (m_videos < 2) {
    throw ValueError("cider needs at least two videos to define its IDF");
  }

  // Document frequency per order: the number of videos whose reference set
  // contains the n-gram at least once.
  std::map<std::string, int> df[kMaxOrder];
  for (const EvalEntry& entry : corpus) {
    for (int n = 1; n <= kMaxOrder; ++n) {
      std::set<std::string> seen;
      for (const auto& ref : entry.references) {
        for (const auto& [key, count] : ngram_counts(ref, n)) {
          (void)count;
          seen.insert(key);
        }
      }
      for (const std::string& key : seen) ++df[n - 1][key];
    }
  }
  const double log_m = std::log(static_cast<double>(m_videos));

  // TF-IDF vector of one sentence at one order: counts normalized by the
  // sentence's n-gram total, weighted by log(M / max(df, 1)).
  auto vectorize = [&](const std::vector<std::string>& tokens, int n) {
    std::map<std::string, double> vec;
    const auto counts = ngram_counts(tokens, n);
    double total = 0.0;
    for (const auto& [key, count] : counts) total += count;
    if (total == 0.0) return vec;
    const auto& freq = df[n - 1];
    for (const auto& [key, count] : counts) {
      auto it = freq.find(key);
      const double idf = log_m - std::log(std::max(
                                     it == freq.end() ? 1.0
                                                      : static_cast<double>(it->second),
                                     1.0));
      vec[key] = (static_cast<double>(count) / total) * idf;
    }
    return vec;
  };
  auto cosine = [](const std::map<std::string, double>& a,
                   const std::map<std::string, double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (const auto& [key, value] : a) {
      na += value * value;
      auto it = b.find(key);
      if (it != b.end()) dot += value * it->second;
    }
    for (const auto& [key, value] : b) nb += value * value;
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
  };

  double corpus_sum = 0.0;
  for (const EvalEntry& entry : corpus) {
    double order_sum = 0.0;
    for (int n = 1; n <= kMaxOrder; ++n) {
      const auto cand = vectorize(entry.candidate, n);
      double ref_sum = 0.0;
      for (const auto& ref : entry.references) {
        ref_sum += cosine(cand, vectorize(ref, n));
      }
      order_sum += ref_sum / static_cast<double>(entry.references.size());
    }
    corpus_sum += 10.0 * order_sum / kMaxOrder;
  }
  return corpus_sum / static_cast<double>(m_videos);
}

MetricReport evaluate(const EvalCorpus& corpus) {
  MetricReport report;
  report.bleu4 = bleu4(corpus);
  report.rouge_l = rouge_l(corpus);
  report.cider = cider(corpus);
  return report;
}

std::string metric_report_json(const MetricReport& report) {
  char buf[128];
  std::snprintf(buf, sizeof(buf),
                "{\"bleu4\": %.6f, \"rouge_l\": %.6f, \"cider\": %.6f}",
                report.bleu4, report.rouge_l, report.cider);
  return buf;
}

std::vector<std::string> normalize_tokens(const std::vector<std::string>& tokens) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& token : tokens) {
    std::string clean;
    for (char ch : token) {
      const auto uch = static_cast<unsigned char>(ch);
      if (std::ispunct(uch)) continue;
      clean += static_cast<char>(std::tolower(uch));
    }
    if (!clean.empty()) out.push_back(std::move(clean));
  }
  return out;
}

}  // namespace hmn
