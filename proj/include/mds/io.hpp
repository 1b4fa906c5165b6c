#pragma once

// File formats.
//
// Distance CSV: header row "label,<item1>,<item2>,...", then one row per item
// with its label and the full symmetric row. Blank cells are unobserved; the
// diagonal is ignored.
//
// Travel network CSV: header "from,to,probability", one directed edge per row.
//
// X snapshot file (binary, little-endian):
//   "MDSX" | uint32 version (1) | uint64 n | uint64 d
//   repeated: uint64 iteration | n*d float64, row-major

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "mds/sampler.hpp"
#include "mds/types.hpp"

namespace mds {

DissimilarityData read_distance_csv(const std::string& path);
DissimilarityData parse_distance_csv(std::istream& in, const std::string& source = "<stream>");
void write_distance_csv(const DissimilarityData& data, const std::string& path);
void write_distance_csv(const DissimilarityData& data, std::ostream& out);

/// "label,x1,...,xD" rows.
void write_latent_csv(const LatentConfiguration& x, const std::vector<std::string>& labels, const std::string& path);
LatentConfiguration read_latent_csv(const std::string& path, std::vector<std::string>* labels = nullptr);

struct TravelEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double probability = 0.0;
};

/// Directed network with transition probabilities p in (0, 1].
class TravelNetwork {
 public:
  TravelNetwork() = default;
  /// Throws std::invalid_argument for self-edges, probabilities outside
  /// (0, 1], unknown nodes or outgoing sums above one.
  TravelNetwork(std::vector<std::string> nodes, std::vector<TravelEdge> edges);

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<TravelEdge>& edges() const { return edges_; }

 private:
  std::vector<std::string> nodes_;
  std::vector<TravelEdge> edges_;
};

TravelNetwork read_travel_network(const std::string& path);

enum class GroupAggregation { minimum, mean };

/// Edge lengths 1 - log p, all-pairs shortest paths, then
/// d = (d_ab + d_ba) / 2. Throws std::invalid_argument listing disconnected
/// pairs.
DissimilarityData effective_distance(const TravelNetwork& network);

/// Aggregates node distances to groups: `group_of[node]` names the group of
/// each node. Distances between two groups combine all member pairs across
/// them.
DissimilarityData aggregate_by_group(const DissimilarityData& node_distances, const std::vector<std::string>& group_of,
                                     GroupAggregation how);

/// "node,group" rows.
std::vector<std::string> read_group_file(const std::string& path, const std::vector<std::string>& nodes);

/// iteration,block,accepted,log_posterior,sigma2,trace_sigma,sigma_1_1..sigma_D_D,tree_index
void write_sample_log(const ChainLog& log, const std::string& path);

void write_snapshots(const ChainLog& log, const std::string& path);

struct SnapshotFile {
  std::vector<std::uint64_t> iterations;
  std::vector<LatentConfiguration> snapshots;
};
SnapshotFile read_snapshots(const std::string& path);

/// %.17g formatting so values round-trip exactly.
std::string format_real(double v);

}  // namespace mds
