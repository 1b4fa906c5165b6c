#include "mds/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "mds/error.hpp"

namespace mds {

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) {
    return {};
  }
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

bool parse_real(const std::string& text, double& out) {
  const auto t = trim(text);
  if (t.empty()) {
    return false;
  }
  const auto result = std::from_chars(t.data(), t.data() + t.size(), out);
  return result.ec == std::errc() && result.ptr == t.data() + t.size();
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) {
    throw IoError("cannot write '" + path + "'");
  }
  return out;
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) {
    throw IoError("cannot open '" + path + "'");
  }
  return in;
}

}  // namespace

DissimilarityData parse_distance_csv(std::istream& in, const std::string& source) {
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(source + ": empty distance file");
  }
  auto header = split_csv(line);
  if (header.size() < 2) {
    throw IoError(source + ": header needs at least one item label");
  }
  std::vector<std::string> labels;
  for (std::size_t c = 1; c < header.size(); ++c) {
    labels.push_back(trim(header[c]));
  }
  const auto n = labels.size();
  RowMatrix values = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<std::vector<char>> present(n, std::vector<char>(n, 0));
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    if (row >= n) {
      throw IoError(source + ": more rows than header labels");
    }
    const auto cells = split_csv(line);
    if (cells.size() != n + 1) {
      throw IoError(source + ": row " + std::to_string(row + 1) + " has " + std::to_string(cells.size()) +
                    " cells, expected " + std::to_string(n + 1));
    }
    if (trim(cells[0]) != labels[row]) {
      throw IoError(source + ": row label '" + trim(cells[0]) + "' does not match column label '" + labels[row] + "'");
    }
    for (std::size_t c = 0; c < n; ++c) {
      if (trim(cells[c + 1]).empty()) {
        continue;
      }
      double v = 0.0;
      if (!parse_real(cells[c + 1], v)) {
        throw IoError(source + ": cannot parse '" + cells[c + 1] + "' in row " + labels[row]);
      }
      values(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) = v;
      present[row][c] = 1;
    }
    ++row;
  }
  if (row != n) {
    throw IoError(source + ": expected " + std::to_string(n) + " rows, found " + std::to_string(row));
  }
  ObservationMask mask(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      const bool a = present[i][j] != 0;
      const bool b = present[j][i] != 0;
      if (a != b) {
        throw IoError(source + ": entry (" + labels[i] + ", " + labels[j] + ") is observed in only one triangle");
      }
      const auto ii = static_cast<Eigen::Index>(i);
      const auto jj = static_cast<Eigen::Index>(j);
      if (a && values(ii, jj) != values(jj, ii)) {
        throw IoError(source + ": matrix is not symmetric at (" + labels[i] + ", " + labels[j] + ")");
      }
      mask.set(i, j, a);
    }
    values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 0.0;
  }
  try {
    return DissimilarityData(std::move(values), std::move(mask), std::move(labels));
  } catch (const std::invalid_argument& e) {
    throw IoError(source + ": " + e.what());
  }
}

DissimilarityData read_distance_csv(const std::string& path) {
  auto in = open_in(path);
  return parse_distance_csv(in, path);
}

void write_distance_csv(const DissimilarityData& data, std::ostream& out) {
  const auto n = data.size();
  auto label = [&](std::size_t i) { return data.labels().empty() ? "item" + std::to_string(i) : data.labels()[i]; };
  out << "label";
  for (std::size_t j = 0; j < n; ++j) {
    out << ',' << label(j);
  }
  out << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    out << label(i);
    for (std::size_t j = 0; j < n; ++j) {
      out << ',';
      if (data.observed(i, j)) {
        out << format_real(data.value(i, j));
      }
    }
    out << '\n';
  }
}

void write_distance_csv(const DissimilarityData& data, const std::string& path) {
  auto out = open_out(path);
  write_distance_csv(data, out);
}

void write_latent_csv(const LatentConfiguration& x, const std::vector<std::string>& labels, const std::string& path) {
  auto out = open_out(path);
  out << "label";
  for (std::size_t k = 0; k < x.dim(); ++k) {
    out << ",x" << (k + 1);
  }
  out << '\n';
  for (std::size_t i = 0; i < x.size(); ++i) {
    out << (i < labels.size() ? labels[i] : "item" + std::to_string(i));
    for (std::size_t k = 0; k < x.dim(); ++k) {
      out << ',' << format_real(x.coords()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)));
    }
    out << '\n';
  }
}

LatentConfiguration read_latent_csv(const std::string& path, std::vector<std::string>* labels) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) {
    throw IoError(path + ": empty latent file");
  }
  const auto d = split_csv(line).size() - 1;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != d + 1) {
      throw IoError(path + ": ragged latent row");
    }
    names.push_back(trim(cells[0]));
    std::vector<double> row(d);
    for (std::size_t k = 0; k < d; ++k) {
      if (!parse_real(cells[k + 1], row[k])) {
        throw IoError(path + ": cannot parse '" + cells[k + 1] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  RowMatrix coords(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) {
      coords(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    }
  }
  if (labels != nullptr) {
    *labels = std::move(names);
  }
  return LatentConfiguration(std::move(coords));
}

TravelNetwork::TravelNetwork(std::vector<std::string> nodes, std::vector<TravelEdge> edges)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  std::vector<double> outgoing(nodes_.size(), 0.0);
  for (const auto& e : edges_) {
    if (e.from >= nodes_.size() || e.to >= nodes_.size()) {
      throw std::invalid_argument("edge refers to an unknown node");
    }
    if (e.from == e.to) {
      throw std::invalid_argument("self-edge at node '" + nodes_[e.from] + "'");
    }
    if (!(e.probability > 0.0 && e.probability <= 1.0)) {
      throw std::invalid_argument("transition probability outside (0, 1] on edge " + nodes_[e.from] + " -> " +
                                  nodes_[e.to]);
    }
    outgoing[e.from] += e.probability;
  }
  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    if (outgoing[v] > 1.0 + 1e-9) {
      throw std::invalid_argument("outgoing probabilities of '" + nodes_[v] + "' sum above one");
    }
  }
}

TravelNetwork read_travel_network(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || trim(split_csv(line).at(0)) != "from") {
    throw IoError(path + ": expected header 'from,to,probability'");
  }
  std::vector<std::string> nodes;
  std::unordered_map<std::string, std::size_t> index;
  auto node = [&](const std::string& name) {
    const auto [it, inserted] = index.emplace(name, nodes.size());
    if (inserted) {
      nodes.push_back(name);
    }
    return it->second;
  };
  std::vector<TravelEdge> edges;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split_csv(line);
    double p = 0.0;
    if (cells.size() != 3 || !parse_real(cells[2], p)) {
      throw IoError(path + ": malformed edge row '" + line + "'");
    }
    const auto from = node(trim(cells[0]));
    const auto to = node(trim(cells[1]));
    edges.push_back({from, to, p});
  }
  try {
    return TravelNetwork(std::move(nodes), std::move(edges));
  } catch (const std::invalid_argument& e) {
    throw IoError(path + ": " + e.what());
  }
}

DissimilarityData effective_distance(const TravelNetwork& network) {
  const auto n = network.nodes().size();
  std::vector<std::vector<std::pair<std::size_t, double>>> adjacency(n);
  for (const auto& e : network.edges()) {
    adjacency[e.from].emplace_back(e.to, 1.0 - std::log(e.probability));
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  RowMatrix directed = RowMatrix::Constant(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n), kInf);
  using Item = std::pair<double, std::size_t>;
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> dist(n, kInf);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[s] = 0.0;
    queue.emplace(0.0, s);
    while (!queue.empty()) {
      const auto [d, u] = queue.top();
      queue.pop();
      if (d > dist[u]) {
        continue;
      }
      for (const auto& [v, w] : adjacency[u]) {
        if (d + w < dist[v]) {
          dist[v] = d + w;
          queue.emplace(dist[v], v);
        }
      }
    }
    for (std::size_t t = 0; t < n; ++t) {
      directed(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) = dist[t];
    }
  }
  std::vector<std::string> missing;
  std::size_t missing_count = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && std::isinf(directed(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)))) {
        ++missing_count;
        if (missing.size() < 10) {
          missing.push_back(network.nodes()[a] + "->" + network.nodes()[b]);
        }
      }
    }
  }
  if (missing_count > 0) {
    std::string msg = "effective distance undefined for " + std::to_string(missing_count) + " disconnected pairs:";
    for (const auto& m : missing) {
      msg += " " + m;
    }
    if (missing_count > missing.size()) {
      msg += " ...";
    }
    throw std::invalid_argument(msg);
  }
  RowMatrix sym = 0.5 * (directed + directed.transpose());
  sym.diagonal().setZero();
  return DissimilarityData(std::move(sym), ObservationMask(n, true), network.nodes());
}

DissimilarityData aggregate_by_group(const DissimilarityData& node_distances, const std::vector<std::string>& group_of,
                                     GroupAggregation how) {
  const auto n = node_distances.size();
  if (group_of.size() != n) {
    throw std::invalid_argument("every node needs a group");
  }
  std::vector<std::string> groups;
  std::unordered_map<std::string, std::size_t> index;
  std::vector<std::size_t> g(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto [it, inserted] = index.emplace(group_of[v], groups.size());
    if (inserted) {
      groups.push_back(group_of[v]);
    }
    g[v] = it->second;
  }
  const auto m = static_cast<Eigen::Index>(groups.size());
  RowMatrix best = RowMatrix::Constant(m, m, std::numeric_limits<double>::infinity());
  RowMatrix sum = RowMatrix::Zero(m, m);
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(m, m);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const auto ga = static_cast<Eigen::Index>(g[a]);
      const auto gb = static_cast<Eigen::Index>(g[b]);
      if (a == b || ga == gb || !node_distances.observed(a, b)) {
        continue;
      }
      const double d = node_distances.value(a, b);
      best(ga, gb) = std::min(best(ga, gb), d);
      sum(ga, gb) += d;
      ++count(ga, gb);
    }
  }
  RowMatrix values = RowMatrix::Zero(m, m);
  ObservationMask mask(groups.size(), false);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < a; ++b) {
      if (count(a, b) == 0) {
        continue;
      }
      const double v = how == GroupAggregation::minimum ? best(a, b) : sum(a, b) / count(a, b);
      values(a, b) = v;
      values(b, a) = v;
      mask.set(static_cast<std::size_t>(a), static_cast<std::size_t>(b), true);
    }
  }
  return DissimilarityData(std::move(values), std::move(mask), std::move(groups));
}

std::vector<std::string> read_group_file(const std::string& path, const std::vector<std::string>& nodes) {
  auto in = open_in(path);
  std::unordered_map<std::string, std::string> group;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.size() != 2) {
      throw IoError(path + ": expected 'node,group' rows");
    }
    if (first && trim(cells[0]) == "node") {
      first = false;
      continue;
    }
    first = false;
    group[trim(cells[0])] = trim(cells[1]);
  }
  std::vector<std::string> out;
  for (const auto& node : nodes) {
    const auto it = group.find(node);
    if (it == group.end()) {
      throw IoError(path + ": node '" + node + "' has no group");
    }
    out.push_back(it->second);
  }
  return out;
}

void write_sample_log(const ChainLog& log, const std::string& path) {
  auto out = open_out(path);
  const auto d = log.records.empty() ? 0 : log.records.front().sigma_mat.rows();
  out << "iteration,block,accepted,log_posterior,sigma2,trace_sigma";
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      out << ",sigma_" << (a + 1) << '_' << (b + 1);
    }
  }
  out << ",tree_index\n";
  for (const auto& r : log.records) {
    out << r.iteration << ',' << to_string(r.block) << ',' << (r.accepted ? 1 : 0) << ','
        << format_real(r.log_posterior) << ',' << format_real(r.sigma2) << ',' << format_real(r.sigma_mat.trace());
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) {
        out << ',' << format_real(r.sigma_mat(a, b));
      }
    }
    out << ',' << r.tree_index << '\n';
  }
}

namespace {

constexpr char kSnapshotMagic[4] = {'M', 'D', 'S', 'X'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof value)) {
    throw IoError(path + ": truncated snapshot file");
  }
  return value;
}

}  // namespace

void write_snapshots(const ChainLog& log, const std::string& path) {
  auto out = open_out(path, std::ios::out | std::ios::binary);
  const std::uint64_t n = log.snapshots.empty() ? 0 : log.snapshots.front().size();
  const std::uint64_t d = log.snapshots.empty() ? 0 : log.snapshots.front().dim();
  out.write(kSnapshotMagic, 4);
  put(out, kSnapshotVersion);
  put(out, n);
  put(out, d);
  for (std::size_t s = 0; s < log.snapshots.size(); ++s) {
    put<std::uint64_t>(out, log.records[s].iteration);
    const auto& c = log.snapshots[s].coords();
    out.write(reinterpret_cast<const char*>(c.data()), static_cast<std::streamsize>(sizeof(double) * c.size()));
  }
}

SnapshotFile read_snapshots(const std::string& path) {
  auto in = open_in(path, std::ios::in | std::ios::binary);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kSnapshotMagic, 4) != 0) {
    throw IoError(path + ": not an X snapshot file");
  }
  if (get<std::uint32_t>(in, path) != kSnapshotVersion) {
    throw IoError(path + ": unsupported snapshot version");
  }
  const auto n = get<std::uint64_t>(in, path);
  const auto d = get<std::uint64_t>(in, path);
  SnapshotFile file;
  while (in.peek() != std::char_traits<char>::eof()) {
    file.iterations.push_back(get<std::uint64_t>(in, path));
    RowMatrix c(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    if (!in.read(reinterpret_cast<char*>(c.data()), static_cast<std::streamsize>(sizeof(double) * n * d))) {
      throw IoError(path + ": truncated snapshot file");
    }
    file.snapshots.emplace_back(std::move(c));
  }
  return file;
}

}  // namespace mds
