#include <cmath>

#include "metapde/error.hpp"
#include "metapde/tasks/task.hpp"

namespace metapde::tasks {

const char* family_name(Family f) {
  switch (f) {
    case Family::Poisson:
      return "poisson";
    case Family::Burgers:
      return "burgers";
    case Family::Elasticity:
      return "elasticity";
  }
  return "?";
}

Family parse_family(const std::string& name) {
  if (name == "poisson") return Family::Poisson;
  if (name == "burgers") return Family::Burgers;
  if (name == "elasticity") return Family::Elasticity;
  throw InputError("unknown family '" + name + "' (expected poisson, burgers or elasticity)");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Full:
      return "full";
    case Variant::Narrow:
      return "narrow";
    case Variant::ShapeStudy:
      return "shape";
    case Variant::Affine:
      return "affine";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::Full;
  if (name == "narrow") return Variant::Narrow;
  if (name == "shape") return Variant::ShapeStudy;
  if (name == "affine") return Variant::Affine;
  throw InputError("unknown distribution '" + name + "' (expected full, narrow, shape or affine)");
}

PointCounts split_points(Family family, int total) {
  require(total >= 10, "split_points: need at least 10 points");
  PointCounts c;
  c.interior = static_cast<int>(std::lround(0.8 * total));
  if (family == Family::Burgers) {
    c.boundary = (total - c.interior) / 2;
    c.initial = total - c.interior - c.boundary;
  } else {
    c.boundary = total - c.interior;
  }
  return c;
}

Eigen::MatrixXd Task::sample_initial(Rng&, int) const {
  throw ContractViolation("sample_initial: task is not time-dependent");
}

CollocationBatch Task::sample_batch(Rng& rng, const PointCounts& counts) const {
  require(counts.interior > 0 && counts.boundary > 0, "sample_batch: empty bucket");
  CollocationBatch b;
  b.interior = sample_interior(rng, counts.interior);
  b.boundary = sample_boundary(rng, counts.boundary);
  if (time_dependent()) {
    require(counts.initial > 0, "sample_batch: time-dependent task needs initial points");
    b.initial = sample_initial(rng, counts.initial);
  }
  return b;
}

LossTerms build_loss(const Task& task, const CollocationBatch& batch, const siren::NetConfig& cfg,
                     const siren::TapedParams& params) {
  require(batch.interior.cols() > 0 && batch.boundary.cols() > 0, "build_loss: empty bucket");
  require(!task.time_dependent() || batch.initial.cols() > 0, "build_loss: empty initial-condition bucket");
  require(cfg.input_dim == task.input_dim() && cfg.output_dim == task.output_dim(),
          "build_loss: network shape does not match the task");
  return task.build_loss(cfg, params, batch);
}

TaskSpec TaskDistribution::sample(std::uint64_t seed) const {
  switch (family) {
    case Family::Poisson:
      return sample_poisson_task(seed, variant);
    case Family::Burgers:
      return sample_burgers_task(seed, variant);
    case Family::Elasticity:
      return sample_elastic_task(seed, variant, elastic);
  }
  throw ContractViolation("unknown family");
}

}  // namespace metapde::tasks
