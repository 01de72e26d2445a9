#pragma once

#include "mmg/hierarchy.hpp"
#include "mmg/mesh.hpp"
#include "mmg/param.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mmg {

enum class CaseKind { BPillarA1, BPillarA2, BPillarA3, UChannel };

std::string_view to_string(CaseKind c);
CaseKind parse_case(std::string_view s);
bool is_bpillar(CaseKind c);
/// Octagon for the pillar family, square for the channel.
DomainKind default_domain(CaseKind c);

struct ParamBound {
  std::string name;
  double lo = 0.0;
  double hi = 0.0;
};

/// Sampling bounds of every design parameter of a case, in vector order.
std::vector<ParamBound> case_bounds(CaseKind c);

/// Mesh density: intervals across the profile and along the part.
struct GridResolution {
  int across = 16;
  int along = 48;
};

struct GeneratedPart {
  ShellMesh mesh;
  NodeRoles roles;
};

// Pillar: hat section swept along y, widening into a T between t1 and t2.
struct BPillarDims {
  double height = 400.0;
  double crown_half = 30.0;  // below t1
  double top_half = 105.0;   // above t2
  double depth = 40.0;
  double draft_deg = 20.0;
  double flange = 20.0;
  double t1 = 0.625;
  double t2 = 0.8125;
  double bump_radius = 0.2;  // in height fractions
  double contact_radius = 25.0;

  double x_extent() const;  // x_b
  double y_extent() const { return height; }
  double z_extent() const { return depth; }
};

struct BPillarParams {
  double x_morph = 0.0;
  double y_morph = 0.0;
  double z_morph = 0.0;
  int control_point = 2;  // bump at 1/4, 1/2 or 3/4 height

  static BPillarParams from_row(const std::vector<double>& row);
};

void validate(const BPillarParams& p, const BPillarDims& dims = {});
ShellMesh bpillar_mesh(const BPillarParams& p, const GridResolution& res = {}, const BPillarDims& dims = {});
GeneratedPart gen_bpillar_like(const BPillarParams& p, const GridResolution& res = {},
                               const BPillarDims& dims = {});

// Channel along x: left addendum, slant, middle plane, slant, right addendum.
struct UChannelParams {
  double x_m = 200.0;
  double x_l = 100.0, x_r = 100.0;
  double l_l = 87.5, l_r = 87.5;
  double y_m = 57.5, y_l = 68.75, y_r = 68.75;
  double y_fl = 20.0;
  double z_m = 46.7, z_l = 44.4, z_r = 44.4;
  double alpha_l = 15.0, alpha_r = 15.0;              // degrees
  double beta_l = 10.0, beta_r = 10.0, beta_m = 10.0;  // degrees

  static UChannelParams from_row(const std::vector<double>& row);
};

inline constexpr double kUChannelContactRadius = 20.0;

void validate(const UChannelParams& p);
ShellMesh uchannel_mesh(const UChannelParams& p, const GridResolution& res = {});
GeneratedPart gen_uchannel(const UChannelParams& p, const GridResolution& res = {});

/// Throws SelfIntersecting when the projection onto the dominant plane folds.
void check_projection(const ShellMesh& mesh);

GeneratedPart generate_part(CaseKind c, const std::vector<double>& row, const GridResolution& res = {});

/// Base-geometry templates: [0] the fine reference, then roughly 200, 50 and 12 nodes.
std::vector<ShellMesh> case_templates(CaseKind c, const GridResolution& res = {});

struct OracleOptions {
  double amplitude = 30.0;    // peak inward displacement (mm)
  double bending = 8.0;       // global bending amplitude (mm)
  double ramp_fraction = 0.25;  // boundary ramp length over the axis extent
  double curvature_scale = 10.0;
  int axis = 1;  // long axis of the part
};

/// Analytic stand-in for the crash response: a contact dent along the surface
/// normal plus a global bending mode, both ramped to zero at constrained nodes.
RowMatrix oracle_deformation(const ShellMesh& mesh, const NodeRoles& roles, const OracleOptions& opt = {});
OracleOptions oracle_options(CaseKind c);

std::string target_csv(const RowMatrix& y);
RowMatrix parse_target_csv(std::string_view text, int node_count);
RowMatrix load_target(const std::filesystem::path& path, int node_count);

struct SampleRecord {
  std::string id;
  std::filesystem::path mesh;
  std::filesystem::path roles;
  std::filesystem::path target;
  std::vector<double> params;
};

struct Manifest {
  CaseKind kind = CaseKind::BPillarA3;
  DomainKind domain = DomainKind::Octagon;
  std::uint64_t seed = 0;
  GridResolution resolution;
  std::vector<std::string> param_names;
  std::vector<std::filesystem::path> templates;
  std::vector<SampleRecord> train;
  std::vector<SampleRecord> test;
  int rejected = 0;
};

struct CampaignSpec {
  CaseKind kind = CaseKind::BPillarA3;
  int n_train = 300;
  int n_test = 50;
  std::uint64_t seed = 0;
  GridResolution resolution;
};

/// Independent LHS designs for train and test; folded samples are replaced by
/// uniform redraws. Paths in the manifest are relative to `out`.
Manifest gen_campaign(const CampaignSpec& spec, const std::filesystem::path& out);

void save_manifest(const std::filesystem::path& path, const Manifest& m);
/// Paths come back resolved against the manifest's directory.
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace mmg
