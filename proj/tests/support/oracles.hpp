#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. Each one takes the slow, obvious route on purpose.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

// Mann-Whitney statistic over all positive/negative pairs, ties count 1/2.
inline double pairwise_auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

// 8-connected labelling by union-find; components listed by their smallest
// pixel, pixels ascending.
inline std::vector<std::vector<int>> union_find_components(const std::vector<std::uint8_t>& mask, int h, int w) {
  std::vector<int> parent(mask.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask[y * w + x]) continue;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int ny = y + dy;
          const int nx = x + dx;
          if (ny < 0 || ny >= h || nx < 0 || nx >= w || !mask[ny * w + nx]) continue;
          unite(y * w + x, ny * w + nx);
        }
      }
    }
  }
  std::map<int, std::vector<int>> groups;
  for (int p = 0; p < h * w; ++p) {
    if (mask[p]) groups[find(p)].push_back(p);
  }
  std::vector<std::vector<int>> out;
  for (auto& [root, pixels] : groups) out.push_back(std::move(pixels));
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

struct TinyMap {
  std::vector<float> scores;
  std::vector<std::uint8_t> mask;
  int h = 0;
  int w = 0;
};

struct PrPoint {
  double fpr;
  double pro;
};

// Recomputes FPR and PRO from scratch at one threshold (score >= t).
inline PrPoint pro_at(const std::vector<TinyMap>& maps, double t) {
  double fp = 0.0;
  double normals = 0.0;
  double coverage = 0.0;
  double components = 0.0;
  for (const auto& m : maps) {
    for (std::size_t p = 0; p < m.mask.size(); ++p) {
      if (m.mask[p]) continue;
      normals += 1.0;
      if (m.scores[p] >= t) fp += 1.0;
    }
    for (const auto& comp : union_find_components(m.mask, m.h, m.w)) {
      double hit = 0.0;
      for (int p : comp) hit += m.scores[p] >= t ? 1.0 : 0.0;
      coverage += hit / static_cast<double>(comp.size());
      components += 1.0;
    }
  }
  return {fp / normals, coverage / components};
}

// Normalized area of PRO over FPR in [0, limit] from the curve through
// (0, 0) and one point per distinct score, interpolating at the limit and
// holding the last PRO when the curve ends early.
inline double brute_force_aupro(const std::vector<TinyMap>& maps, double limit) {
  std::vector<double> ts;
  for (const auto& m : maps) ts.insert(ts.end(), m.scores.begin(), m.scores.end());
  std::sort(ts.begin(), ts.end(), std::greater<>());
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  std::vector<PrPoint> pts{{0.0, 0.0}};
  for (double t : ts) pts.push_back(pro_at(maps, t));
  double area = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double x0 = pts[i - 1].fpr;
    const double y0 = pts[i - 1].pro;
    double x1 = pts[i].fpr;
    double y1 = pts[i].pro;
    if (x0 >= limit) break;
    if (x1 > limit) {
      y1 = y0 + (y1 - y0) * (limit - x0) / (x1 - x0);
      x1 = limit;
    }
    area += 0.5 * (x1 - x0) * (y0 + y1);
  }
  const PrPoint last = pts.back();
  if (last.fpr < limit) area += (limit - last.fpr) * last.pro;
  return area / limit;
}

// E[T] for the uniform class-draw process, computed on the absorbing Markov
// chain whose state is the vector of per-class draw counts capped at quota.
inline double markov_expected_draws(const std::vector<int>& quotas) {
  const int n = static_cast<int>(quotas.size());
  std::map<std::vector<int>, double> memo;
  std::function<double(const std::vector<int>&)> expect = [&](const std::vector<int>& s) -> double {
    auto it = memo.find(s);
    if (it != memo.end()) return it->second;
    int complete = 0;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      if (s[i] >= quotas[i]) {
        ++complete;
        continue;
      }
      std::vector<int> next = s;
      next[i] += 1;
      acc += expect(next);
    }
    double e = 0.0;
    if (complete < n) e = (1.0 + acc / n) / (1.0 - static_cast<double>(complete) / n);
    memo[s] = e;
    return e;
  };
  return expect(std::vector<int>(n, 0));
}

// n * H_n, the coupon-collector expectation.
inline double coupon_collector(int n) {
  double h = 0.0;
  for (int i = 1; i <= n; ++i) h += 1.0 / i;
  return n * h;
}

}  // namespace oracle
