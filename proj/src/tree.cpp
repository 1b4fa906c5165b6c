#include "mds/tree.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mds/error.hpp"
#include "mds/normal.hpp"

namespace mds {

namespace {

std::atomic<std::uint64_t> next_covariance_version{1};

}  // namespace

Phylogeny::Phylogeny(std::vector<TreeNode> nodes, int root) : nodes_(std::move(nodes)), root_(root) {
  const auto count = static_cast<int>(nodes_.size());
  if (root_ < 0 || root_ >= count) {
    throw std::invalid_argument("tree root index out of range");
  }
  if (nodes_[static_cast<std::size_t>(root_)].parent != -1) {
    throw std::invalid_argument("tree root has a parent");
  }
  // Iterative DFS: tips left to right and a postorder.
  std::vector<std::pair<int, std::size_t>> stack{{root_, 0}};
  std::vector<char> seen(nodes_.size(), 0);
  seen[static_cast<std::size_t>(root_)] = 1;
  while (!stack.empty()) {
    auto& [node, next_child] = stack.back();
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    if (next_child < n.children.size()) {
      const int child = n.children[next_child++];
      if (child < 0 || child >= count || seen[static_cast<std::size_t>(child)] != 0 ||
          nodes_[static_cast<std::size_t>(child)].parent != node) {
        throw std::invalid_argument("tree links are inconsistent");
      }
      seen[static_cast<std::size_t>(child)] = 1;
      stack.emplace_back(child, 0);
      continue;
    }
    if (n.children.empty()) {
      tips_.push_back(node);
    }
    postorder_.push_back(node);
    stack.pop_back();
  }
  if (postorder_.size() != nodes_.size()) {
    throw std::invalid_argument("tree has unreachable nodes");
  }
  std::unordered_map<std::string, int> labels;
  for (int node : postorder_) {
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    if (!n.children.empty() && n.children.size() != 2) {
      throw std::invalid_argument("tree is not bifurcating");
    }
    if (node != root_ && !(n.branch_length > 0.0 && std::isfinite(n.branch_length))) {
      throw std::invalid_argument("branch lengths must be positive and finite");
    }
    if (n.children.empty()) {
      if (n.label.empty()) {
        throw std::invalid_argument("tip without a label");
      }
      if (!labels.emplace(n.label, node).second) {
        throw std::invalid_argument("duplicate tip label '" + n.label + "'");
      }
    }
  }
}

std::vector<std::string> Phylogeny::tip_labels() const {
  std::vector<std::string> out;
  out.reserve(tips_.size());
  for (int t : tips_) {
    out.push_back(nodes_[static_cast<std::size_t>(t)].label);
  }
  return out;
}

std::vector<double> Phylogeny::root_distances() const {
  std::vector<double> dist(nodes_.size(), 0.0);
  for (auto it = postorder_.rbegin(); it != postorder_.rend(); ++it) {
    const auto& n = nodes_[static_cast<std::size_t>(*it)];
    if (n.parent >= 0) {
      dist[static_cast<std::size_t>(*it)] = dist[static_cast<std::size_t>(n.parent)] + n.branch_length;
    }
  }
  return dist;
}

namespace {

class NewickParser {
 public:
  explicit NewickParser(std::string_view text) : text_(text) {}

  Phylogeny parse() {
    skip();
    const int root = subtree(-1);
    skip();
    if (peek() == ':') {
      ++pos_;
      nodes_[static_cast<std::size_t>(root)].branch_length = length();
      skip();
    }
    if (peek() != ';') {
      fail("expected ';'");
    }
    ++pos_;
    skip();
    if (pos_ != text_.size()) {
      fail("trailing characters after ';'");
    }
    nodes_[static_cast<std::size_t>(root)].branch_length = 0.0;
    try {
      return Phylogeny(std::move(nodes_), root);
    } catch (const std::invalid_argument& e) {
      throw IoError(std::string("newick: ") + e.what());
    }
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("newick: " + what + " at offset " + std::to_string(pos_));
  }

  void skip() {
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (std::isspace(static_cast<unsigned char>(c)) != 0) {
        ++pos_;
      } else if (c == '[') {
        const auto close = text_.find(']', pos_);
        if (close == std::string_view::npos) {
          fail("unterminated comment");
        }
        pos_ = close + 1;
      } else {
        break;
      }
    }
  }

  std::string label() {
    skip();
    std::string out;
    if (peek() == '\'') {
      ++pos_;
      while (true) {
        if (pos_ >= text_.size()) {
          fail("unterminated quoted label");
        }
        if (text_[pos_] == '\'') {
          if (pos_ + 1 < text_.size() && text_[pos_ + 1] == '\'') {
            out.push_back('\'');
            pos_ += 2;
            continue;
          }
          ++pos_;
          break;
        }
        out.push_back(text_[pos_++]);
      }
      return out;
    }
    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' ||
          std::isspace(static_cast<unsigned char>(c)) != 0) {
        break;
      }
      out.push_back(c);
      ++pos_;
    }
    return out;
  }

  double length() {
    skip();
    const auto start = pos_;
    while (pos_ < text_.size() && (std::isdigit(static_cast<unsigned char>(text_[pos_])) != 0 ||
                                   text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E' ||
                                   text_[pos_] == '-' || text_[pos_] == '+')) {
      ++pos_;
    }
    double value = 0.0;
    const auto* first = text_.data() + start;
    const auto* last = text_.data() + pos_;
    const auto result = std::from_chars(first, last, value);
    if (start == pos_ || result.ec != std::errc() || result.ptr != last) {
      fail("invalid branch length");
    }
    return value;
  }

  int subtree(int parent) {
    skip();
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back(TreeNode{parent, {}, 0.0, {}});
    if (peek() == '(') {
      ++pos_;
      while (true) {
        const int child = subtree(id);
        nodes_[static_cast<std::size_t>(id)].children.push_back(child);
        skip();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        if (peek() == ')') {
          ++pos_;
          break;
        }
        fail("expected ',' or ')'");
      }
      nodes_[static_cast<std::size_t>(id)].label = label();
    } else {
      nodes_[static_cast<std::size_t>(id)].label = label();
      if (nodes_[static_cast<std::size_t>(id)].label.empty()) {
        fail("expected a tip label");
      }
    }
    skip();
    if (parent >= 0) {
      if (peek() != ':') {
        fail("missing branch length");
      }
      ++pos_;
      nodes_[static_cast<std::size_t>(id)].branch_length = length();
    }
    return id;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<TreeNode> nodes_;
};

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string quote_label(const std::string& label) {
  const bool plain = std::none_of(label.begin(), label.end(), [](char c) {
    return c == '(' || c == ')' || c == ',' || c == ':' || c == ';' || c == '[' || c == ']' || c == '\'' ||
           std::isspace(static_cast<unsigned char>(c)) != 0;
  });
  if (plain) {
    return label;
  }
  std::string out = "'";
  for (char c : label) {
    out.push_back(c);
    if (c == '\'') {
      out.push_back('\'');
    }
  }
  out.push_back('\'');
  return out;
}

void write_subtree(const Phylogeny& tree, int node, std::string& out) {
  const auto& n = tree.nodes()[static_cast<std::size_t>(node)];
  if (!n.children.empty()) {
    out.push_back('(');
    for (std::size_t c = 0; c < n.children.size(); ++c) {
      if (c > 0) {
        out.push_back(',');
      }
      write_subtree(tree, n.children[c], out);
    }
    out.push_back(')');
  }
  out += quote_label(n.label);
  if (node != tree.root()) {
    out.push_back(':');
    out += format_double(n.branch_length);
  }
}

}  // namespace

Phylogeny parse_newick(std::string_view text) { return NewickParser(text).parse(); }

std::vector<Phylogeny> parse_newick_lines(std::string_view text) {
  std::vector<Phylogeny> trees;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) {
      end = text.size();
    }
    auto line = text.substr(start, end - start);
    const auto first = line.find_first_not_of(" \t\r");
    if (first != std::string_view::npos) {
      trees.push_back(parse_newick(line.substr(first)));
    }
    start = end + 1;
  }
  return trees;
}

std::vector<Phylogeny> read_newick_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open tree file '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto trees = parse_newick_lines(buffer.str());
  if (trees.empty()) {
    throw IoError("tree file '" + path + "' contains no trees");
  }
  return trees;
}

std::string to_newick(const Phylogeny& tree) {
  std::string out;
  write_subtree(tree, tree.root(), out);
  out.push_back(';');
  return out;
}

Phylogeny random_tree(std::size_t tips, double mean_branch, std::mt19937_64& rng, const std::string& prefix) {
  if (tips == 0) {
    throw std::invalid_argument("random_tree needs at least one tip");
  }
  std::vector<TreeNode> nodes;
  std::vector<double> height;
  std::vector<int> lineages;
  for (std::size_t t = 0; t < tips; ++t) {
    nodes.push_back(TreeNode{-1, {}, 0.0, prefix + std::to_string(t)});
    height.push_back(0.0);
    lineages.push_back(static_cast<int>(t));
  }
  double now = 0.0;
  std::exponential_distribution<double> wait(1.0);
  while (lineages.size() > 1) {
    const double k = static_cast<double>(lineages.size());
    now += mean_branch * wait(rng) * 2.0 / (k * (k - 1.0)) + 1e-9 * mean_branch;
    std::uniform_int_distribution<std::size_t> pick(0, lineages.size() - 1);
    const std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    while (b == a) {
      b = pick(rng);
    }
    const int left = lineages[a];
    const int right = lineages[b];
    const int parent = static_cast<int>(nodes.size());
    nodes.push_back(TreeNode{-1, {left, right}, 0.0, {}});
    height.push_back(now);
    for (int child : {left, right}) {
      nodes[static_cast<std::size_t>(child)].parent = parent;
      nodes[static_cast<std::size_t>(child)].branch_length = now - height[static_cast<std::size_t>(child)];
    }
    lineages.erase(lineages.begin() + static_cast<std::ptrdiff_t>(std::max(a, b)));
    lineages.erase(lineages.begin() + static_cast<std::ptrdiff_t>(std::min(a, b)));
    lineages.push_back(parent);
  }
  return Phylogeny(std::move(nodes), lineages.front());
}

TreeLayout TreeLayout::in_order(std::vector<Phylogeny> trees, std::size_t unsequenced) {
  TreeLayout layout;
  std::size_t row = 0;
  for (const auto& tree : trees) {
    std::vector<std::size_t> rows(tree.tip_count());
    for (auto& r : rows) {
      r = row++;
    }
    layout.tip_rows.push_back(std::move(rows));
  }
  for (std::size_t u = 0; u < unsequenced; ++u) {
    layout.unsequenced_rows.push_back(row++);
  }
  layout.n = row;
  layout.trees = std::move(trees);
  return layout;
}

TreeLayout TreeLayout::from_labels(std::vector<Phylogeny> trees, const std::vector<std::string>& labels) {
  std::unordered_map<std::string, std::size_t> row_of;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!row_of.emplace(labels[i], i).second) {
      throw std::invalid_argument("duplicate item label '" + labels[i] + "'");
    }
  }
  TreeLayout layout;
  layout.n = labels.size();
  std::vector<char> used(labels.size(), 0);
  for (const auto& tree : trees) {
    std::vector<std::size_t> rows;
    for (const auto& label : tree.tip_labels()) {
      const auto it = row_of.find(label);
      if (it == row_of.end()) {
        throw std::invalid_argument("tip label '" + label + "' matches no item");
      }
      if (used[it->second] != 0) {
        throw std::invalid_argument("item '" + label + "' appears in more than one tree");
      }
      used[it->second] = 1;
      rows.push_back(it->second);
    }
    layout.tip_rows.push_back(std::move(rows));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (used[i] == 0) {
      layout.unsequenced_rows.push_back(i);
    }
  }
  layout.trees = std::move(trees);
  return layout;
}

void DiffusionParams::validate() const {
  const auto d = sigma_mat.rows();
  if (d == 0 || sigma_mat.cols() != d || mu0.size() != d) {
    throw std::invalid_argument("diffusion parameters have inconsistent dimensions");
  }
  if (!(tau0 > 0.0) || !(tau_e > 0.0)) {
    throw std::invalid_argument("tau0 and tau_e must be positive");
  }
}

void PriorHyperparams::validate(std::size_t dim) const {
  const auto d = static_cast<Eigen::Index>(dim);
  if (!(d0 > static_cast<double>(dim) - 1.0)) {
    throw std::invalid_argument("Wishart degrees of freedom must exceed D - 1");
  }
  if (t0_mat.rows() != d || t0_mat.cols() != d) {
    throw std::invalid_argument("Wishart rate matrix must be D x D");
  }
  if (t0_mat.llt().info() != Eigen::Success) {
    throw std::invalid_argument("Wishart rate matrix must be SPD");
  }
  if (!(s0 > 0.0) || !(r0 > 0.0)) {
    throw std::invalid_argument("Gamma shape and rate must be positive");
  }
}

TreeCovariance build_tree_covariance(const TreeLayout& layout, double tau0, double tau_e) {
  const auto n = static_cast<Eigen::Index>(layout.n);
  TreeCovariance cov{Eigen::MatrixXd::Zero(n, n), next_covariance_version.fetch_add(1)};
  for (std::size_t m = 0; m < layout.trees.size(); ++m) {
    const auto& tree = layout.trees[m];
    const auto dist = tree.root_distances();
    // Row of X for each tip node.
    std::vector<Eigen::Index> row_of_node(tree.nodes().size(), -1);
    for (std::size_t t = 0; t < tree.tip_count(); ++t) {
      row_of_node[static_cast<std::size_t>(tree.tips()[t])] = static_cast<Eigen::Index>(layout.tip_rows[m][t]);
    }
    // Tips below each node, filled in postorder; a pair first meets at its MRCA.
    std::vector<std::vector<Eigen::Index>> below(tree.nodes().size());
    for (int node : tree.postorder()) {
      const auto idx = static_cast<std::size_t>(node);
      const auto& tn = tree.nodes()[idx];
      if (tn.children.empty()) {
        const auto r = row_of_node[idx];
        cov.values(r, r) = tau0 + dist[idx];
        below[idx].push_back(r);
        continue;
      }
      const double shared = tau0 + dist[idx];
      auto& left = below[static_cast<std::size_t>(tn.children[0])];
      auto& right = below[static_cast<std::size_t>(tn.children[1])];
      for (auto a : left) {
        for (auto b : right) {
          cov.values(a, b) = shared;
          cov.values(b, a) = shared;
        }
      }
      below[idx] = std::move(left);
      below[idx].insert(below[idx].end(), right.begin(), right.end());
      right.clear();
    }
  }
  for (auto r : layout.unsequenced_rows) {
    const auto idx = static_cast<Eigen::Index>(r);
    cov.values(idx, idx) = tau_e;
  }
  if (n > 0 && cov.values.llt().info() != Eigen::Success) {
    throw NumericError("tree covariance is not positive definite");
  }
  return cov;
}

TreeCovariance build_tree_covariance(const std::vector<Phylogeny>& trees, double tau0, double tau_e,
                                     std::size_t unsequenced_count) {
  return build_tree_covariance(TreeLayout::in_order(trees, unsequenced_count), tau0, tau_e);
}

namespace {

Eigen::LLT<Eigen::MatrixXd> factor_or_throw(const Eigen::MatrixXd& m, const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw NumericError(std::string(what) + " is not positive definite");
  }
  return llt;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

RowMatrix centered(const LatentConfiguration& x, const Eigen::VectorXd& mu0) {
  RowMatrix r = x.coords();
  r.rowwise() -= mu0.transpose();
  return r;
}

}  // namespace

double matrix_normal_logpdf_dense(const LatentConfiguration& x, const TreeCovariance& v, const DiffusionParams& dp) {
  dp.validate();
  if (v.size() != x.size() || dp.dim() != x.dim()) {
    throw std::invalid_argument("matrix-normal dimensions disagree");
  }
  const auto n = static_cast<double>(x.size());
  const auto d = static_cast<double>(x.dim());
  const auto v_llt = factor_or_throw(v.values, "tree covariance");
  const auto s_llt = factor_or_throw(dp.sigma_mat, "diffusion covariance");
  const Eigen::MatrixXd r = centered(x, dp.mu0);
  const Eigen::MatrixXd v_inv_r = v_llt.solve(r);
  const Eigen::MatrixXd r_s_inv = s_llt.solve(r.transpose()).transpose();
  const double quad = v_inv_r.cwiseProduct(r_s_inv).sum();
  return -0.5 * (n * d * kLogTwoPi + n * log_det(s_llt) + d * log_det(v_llt) + quad);
}

double matrix_normal_logpdf_pruning(const LatentConfiguration& x, const TreeLayout& layout, const DiffusionParams& dp,
                                    PruningStats* stats) {
  dp.validate();
  if (layout.n != x.size() || dp.dim() != x.dim()) {
    throw std::invalid_argument("matrix-normal dimensions disagree");
  }
  const double d = static_cast<double>(x.dim());
  const auto s_llt = factor_or_throw(dp.sigma_mat, "diffusion covariance");
  const double log_det_sigma = log_det(s_llt);
  const auto& coords = x.coords();

  // -1/2 [D log 2 pi + D log(var) + log|Sigma| + diff^t Sigma^{-1} diff / var]
  auto gaussian_term = [&](const Eigen::VectorXd& diff, double var) {
    const double quad = diff.dot(s_llt.solve(diff));
    return -0.5 * (d * kLogTwoPi + d * std::log(var) + log_det_sigma + quad / var);
  };

  double total = 0.0;
  std::size_t merges = 0;
  for (std::size_t m = 0; m < layout.trees.size(); ++m) {
    const auto& tree = layout.trees[m];
    const auto& nodes = tree.nodes();
    std::vector<Eigen::VectorXd> mean(nodes.size());
    std::vector<double> extra(nodes.size(), 0.0);  // pseudo-branch variance
    std::vector<std::size_t> tip_index(nodes.size(), 0);
    for (std::size_t t = 0; t < tree.tip_count(); ++t) {
      tip_index[static_cast<std::size_t>(tree.tips()[t])] = t;
    }
    for (int node : tree.postorder()) {
      const auto idx = static_cast<std::size_t>(node);
      const auto& tn = nodes[idx];
      if (tn.children.empty()) {
        mean[idx] = coords.row(static_cast<Eigen::Index>(layout.tip_rows[m][tip_index[idx]])).transpose();
        continue;
      }
      const auto c1 = static_cast<std::size_t>(tn.children[0]);
      const auto c2 = static_cast<std::size_t>(tn.children[1]);
      const double v1 = extra[c1] + nodes[c1].branch_length;
      const double v2 = extra[c2] + nodes[c2].branch_length;
      const double sum = v1 + v2;
      total += gaussian_term(mean[c1] - mean[c2], sum);
      extra[idx] = v1 * v2 / sum;
      mean[idx] = (v2 * mean[c1] + v1 * mean[c2]) / sum;
      ++merges;
    }
    const auto root = static_cast<std::size_t>(tree.root());
    total += gaussian_term(mean[root] - dp.mu0, extra[root] + dp.tau0);
  }
  for (auto r : layout.unsequenced_rows) {
    const Eigen::VectorXd diff = coords.row(static_cast<Eigen::Index>(r)).transpose() - dp.mu0;
    total += gaussian_term(diff, dp.tau_e);
  }
  if (stats != nullptr) {
    stats->merges = merges;
  }
  return total;
}

PriorFactor::PriorFactor(const TreeCovariance& v) : llt_(factor_or_throw(v.values, "tree covariance")), version_(v.version) {}

Eigen::MatrixXd PriorFactor::solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

Eigen::MatrixXd PriorFactor::scatter(const LatentConfiguration& x, const Eigen::VectorXd& mu0) const {
  const Eigen::MatrixXd r = centered(x, mu0);
  return r.transpose() * llt_.solve(r);
}

GradientMatrix prior_gradient(const LatentConfiguration& x, const TreeCovariance& v, const PriorFactor& factor,
                              const DiffusionParams& dp) {
  if (factor.version() != v.version) {
    throw std::logic_error("prior factorization is stale for this tree covariance");
  }
  if (v.size() != x.size() || dp.dim() != x.dim()) {
    throw std::invalid_argument("matrix-normal dimensions disagree");
  }
  const auto s_llt = factor_or_throw(dp.sigma_mat, "diffusion covariance");
  const Eigen::MatrixXd v_inv_r = factor.solve(centered(x, dp.mu0));
  GradientMatrix grad;
  grad.values = -s_llt.solve(v_inv_r.transpose()).transpose();
  return grad;
}

GradientMatrix prior_gradient(const LatentConfiguration& x, const TreeCovariance& v, const DiffusionParams& dp) {
  return prior_gradient(x, v, PriorFactor(v), dp);
}

LatentConfiguration simulate_brownian_tips(const Phylogeny& tree, const DiffusionParams& dp, std::mt19937_64& rng) {
  const auto d = static_cast<Eigen::Index>(dp.dim());
  if (dp.mu0.size() != d || !(dp.tau0 >= 0.0)) {
    throw std::invalid_argument("invalid diffusion parameters for simulation");
  }
  const auto s_llt = factor_or_throw(dp.sigma_mat, "diffusion covariance");
  const Eigen::MatrixXd chol = s_llt.matrixL();
  std::normal_distribution<double> normal(0.0, 1.0);
  auto step = [&](double variance) {
    Eigen::VectorXd z(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      z(k) = normal(rng);
    }
    if (variance == 0.0) {
      return Eigen::VectorXd(Eigen::VectorXd::Zero(d));
    }
    return Eigen::VectorXd(std::sqrt(variance) * (chol * z));
  };
  const auto& nodes = tree.nodes();
  std::vector<Eigen::VectorXd> value(nodes.size());
  const auto& order = tree.postorder();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto idx = static_cast<std::size_t>(*it);
    const auto& tn = nodes[idx];
    if (tn.parent < 0) {
      value[idx] = dp.mu0 + step(dp.tau0);
    } else {
      value[idx] = value[static_cast<std::size_t>(tn.parent)] + step(tn.branch_length);
    }
  }
  RowMatrix coords(static_cast<Eigen::Index>(tree.tip_count()), d);
  for (std::size_t t = 0; t < tree.tip_count(); ++t) {
    coords.row(static_cast<Eigen::Index>(t)) = value[static_cast<std::size_t>(tree.tips()[t])].transpose();
  }
  return LatentConfiguration(std::move(coords));
}

LatentConfiguration simulate_brownian_tips(const Phylogeny& tree, const DiffusionParams& dp, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return simulate_brownian_tips(tree, dp, rng);
}

}  // namespace mds
