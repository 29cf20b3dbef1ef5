// Equivariant tri-plane UNet encoder.
//
// Pipeline: one 3D steerable lifting convolution injects the TSDF into C4
// regular features; mean-pooling projects the volume onto the XY, XZ and YZ
// planes; a steerable UNet refines the XY plane while a weight-shared
// conventional (or reflection-symmetrized) UNet refines the two side planes;
// side-to-tableplane augmentation (S2TP) feeds axis-pooled side features
// back into the XY branch after every convolution block. The refined planes
// form an implicit feature field queryable at any 3D point: the XY sample
// keeps its representation typing and the XZ+YZ sum is the invariant part.
//
// Plane layouts: XY [C,Y,X], XZ [C,Z,X], YZ [C,Z,Y]. Under the generator
// rotation the planes obey f'_xy = rot90(f_xy), f'_yz = f_xz,
// f'_xz = flip_x(f_yz) exactly (linearity of the mean).
//
// Down/upsampling must commute with the even-extent index rotation;
// stride-2 subsampling does not (the rotation center sits between cells), so
// levels are bridged by 2x2 mean pooling and nearest-neighbour upsampling,
// which both commute exactly.
#pragma once

#include "c4g/field.hpp"
#include "c4g/layers.hpp"
#include "c4g/sample_ops.hpp"
#include "c4g/steerable.hpp"

namespace c4g {

enum class EncoderMode { kEquivariant, kConventional };
enum class SideMode { kMixed, kReflectionInvariant };

struct EncoderConfig {
  int grid_size = 40;
  double workspace_m = 0.30;
  int lift_regular_blocks = 2;  // d regular blocks after the lift
  int lift_kernel = 3;
  std::vector<int> xy_regular_blocks = {2, 4, 8};  // per UNet level
  std::vector<int> side_channels = {16, 32, 64};
  EncoderMode mode = EncoderMode::kEquivariant;
  SideMode side_mode = SideMode::kMixed;
  bool s2tp = true;
  bool side_dcn = true;
  bool use_dscn = true;
  double dscn_max_offset = 2.0;

  int depth() const { return static_cast<int>(xy_regular_blocks.size()); }

  void validate() const {
    C4G_CHECK_CONFIG(grid_size >= 8, "grid size must be at least 8");
    C4G_CHECK_CONFIG(!xy_regular_blocks.empty(), "at least one UNet level required");
    C4G_CHECK_CONFIG(xy_regular_blocks.size() == side_channels.size(),
                     "xy and side level counts differ");
    int e = grid_size;
    for (int l = 0; l + 1 < depth(); ++l) {
      C4G_CHECK(e % 2 == 0, ErrorKind::kGeometry,
                "extent " << e << " at level " << l << " not divisible by 2");
      e /= 2;
    }
    C4G_CHECK_CONFIG(lift_regular_blocks >= 1 && lift_kernel % 2 == 1, "invalid lift settings");
    if (mode == EncoderMode::kEquivariant && side_mode == SideMode::kReflectionInvariant) {
      // strict side features are typed in regular blocks until the last layer
      for (int c : side_channels)
        C4G_CHECK_CONFIG(c % 4 == 0, "strict side channels must be multiples of 4, got " << c);
    }
  }
};

template <typename T>
struct PlaneSet {
  Tensor<T> xy, xz, yz;
};

// Mean over the orthogonal axis of a cubic volume [C,Z,Y,X].
template <typename T>
PlaneSet<T> project_to_planes(const Tensor<T>& volume) {
  C4G_CHECK_SHAPE(volume.rank() == 4, "project_to_planes input must be [C,Z,Y,X]");
  C4G_CHECK(volume.shape()[1] == volume.shape()[2] && volume.shape()[2] == volume.shape()[3],
            ErrorKind::kGeometry, "project_to_planes requires a cubic volume");
  return {mean_axis(volume, 1), mean_axis(volume, 2), mean_axis(volume, 3)};
}

// Queryable implicit feature field assembled from the refined planes.
template <typename T>
struct TriplaneFeatures {
  Tensor<T> xy;  // [C_tp, S, S]
  RepresentationSpec xy_spec;
  Tensor<T> xz, yz;  // [C_side, S, S]
  GridGeometry geometry;

  int64_t side_channels() const { return xz.shape()[0]; }
  RepresentationSpec query_spec() const {
    return xy_spec.concat(
        RepresentationSpec::trivials(xy_spec.group(), static_cast<int>(side_channels())));
  }
};

// c(p) = concat(xy(p_x,p_y), xz(p_x,p_z) + yz(p_y,p_z)); bilinear with
// boundary clamping, differentiable w.r.t. plane features and points.
// `points` are world-space meters, [N,3].
template <typename T>
Tensor<T> query_features(const TriplaneFeatures<T>& tri, const Tensor<T>& points) {
  C4G_CHECK_SHAPE(points.rank() == 2 && points.shape()[1] == 3, "points must be [N,3]");
  const auto& geo = tri.geometry;
  auto to_index = [&](const Tensor<T>& world, int axis) {
    return add_scalar(scale(world, T(1.0 / geo.cell_size)),
                      static_cast<T>(-geo.origin[axis] / geo.cell_size - 0.5));
  };
  auto px = to_index(narrow(points, 1, 0, 1), 0);
  auto py = to_index(narrow(points, 1, 1, 1), 1);
  auto pz = to_index(narrow(points, 1, 2, 1), 2);
  // plane layouts: xy [C,Y,X] sampled at (iy,ix); xz [C,Z,X] at (iz,ix);
  // yz [C,Z,Y] at (iz,iy)
  auto xy_f = bilinear_sample(tri.xy, concat<T>({py, px}, 1), BoundaryMode::kClamp);
  auto xz_f = bilinear_sample(tri.xz, concat<T>({pz, px}, 1), BoundaryMode::kClamp);
  auto yz_f = bilinear_sample(tri.yz, concat<T>({pz, py}, 1), BoundaryMode::kClamp);
  return concat<T>({xy_f, add(xz_f, yz_f)}, 1);
}

namespace detail {

// One XY-branch convolution: steerable, deformable steerable, or plain
// depending on the encoder mode.
template <typename T>
struct XyConv {
  EncoderMode mode = EncoderMode::kEquivariant;
  SteerableConv2d<T> steerable;
  DeformableSteerableConv2d<T> dscn;
  Conv2dLayer<T> plain;
  bool is_dscn = false;
  RepresentationSpec out_spec;

  Tensor<T> forward(const Tensor<T>& x) const {
    if (mode == EncoderMode::kConventional) return relu(plain.forward(x));
    Tensor<T> y = is_dscn ? dscn.forward(x) : steerable.forward(x);
    return gated_nonlinearity(y, out_spec, 0);
  }
};

// One side-branch convolution; shared weights process both side planes.
// Under a scene rotation the side planes swap with an x flip and a channel
// action inherited from the lift's typing, so the strict variant needs
// kernels that commute with x flips and intertwine the channel action
// (KernelFamily::kChannelFlip); the mixed variant is a conventional CNN.
template <typename T>
struct SideConv {
  bool typed = false;
  Conv2dLayer<T> plain;
  SteerableConv2d<T> flip_typed;
  DeformableConv2dLayer<T> dcn;
  bool is_dcn = false;

  Tensor<T> forward(const Tensor<T>& x) const {
    if (is_dcn) return relu(dcn.forward(x));
    if (typed) return relu(flip_typed.forward(x));
    return relu(plain.forward(x));
  }
};

// Side-to-tableplane augmentation: f_bar(x,y) = mean_z xz(:,x) + mean_z
// yz(:,y), injected into the XY field through a pointwise map. In the
// strict architecture the reconstruction transforms as an XY field carrying
// the side branch's channel typing (regular blocks in the trunk, trivial at
// the output), so the injection is a 1x1 steerable kernel from that typing
// into the XY spec. The mixed and conventional architectures use an
// ordinary pointwise convolution: their side features carry no typing and
// the typed map would only throttle the 3D information flow.
template <typename T>
struct S2tp {
  bool enabled = false;
  bool typed = false;
  SteerableConv2d<T> typed_f;
  Conv2dLayer<T> plain_f;

  Tensor<T> apply(const Tensor<T>& xy, const Tensor<T>& xz, const Tensor<T>& yz) const {
    if (!enabled) return xy;
    auto fx = mean_axis(xz, 1);  // [C, X]
    auto fy = mean_axis(yz, 1);  // [C, Y]
    const int64_t c = fx.shape()[0], x = fx.shape()[1], y = fy.shape()[1];
    auto fbar = add(reshape(fx, {c, 1, x}), reshape(fy, {c, y, 1}));  // [C, Y, X]
    Tensor<T> injected = typed ? typed_f.forward(fbar) : plain_f.forward(fbar);
    return add(xy, injected);
  }
};

}  // namespace detail

template <typename T>
class TriplaneEncoder {
 public:
  TriplaneEncoder() = default;

  TriplaneEncoder(const EncoderConfig& config, ParamRegistry<T>& registry, Rng& rng)
      : config_(config), group_(4) {
    config_.validate();
    const int levels = config_.depth();
    const bool conv_mode = config_.mode == EncoderMode::kConventional;

    if (conv_mode) {
      plain_lift_ = Conv3dLayer<T>("enc.lift", 1, lift_channels(), config_.lift_kernel, registry,
                                   rng);
    } else {
      lift_ = LiftingConv3d<T>("enc.lift", config_.lift_regular_blocks, config_.lift_kernel,
                               registry, rng);
    }

    auto xy_spec_at = [&](int l) {
      return RepresentationSpec::regulars(group_, config_.xy_regular_blocks[l]);
    };
    auto lift_spec = RepresentationSpec::regulars(group_, config_.lift_regular_blocks);
    // Strict side typing: regular blocks through the trunk, trivial after the
    // final side layer so the queried plane sum is invariant.
    const bool strict = strict_side();
    auto side_trunk_spec = [&](int l) {
      return RepresentationSpec::regulars(group_, config_.side_channels[l] / group_.order);
    };
    auto side_out_spec = RepresentationSpec::trivials(group_, config_.side_channels[0]);

    // down path
    for (int l = 0; l < levels; ++l) {
      auto in_spec = l == 0 ? lift_spec : xy_spec_at(l - 1);
      std::string dn = "enc.d" + std::to_string(l);
      xy_down_.push_back(make_xy_conv(dn + ".xy1", in_spec, xy_spec_at(l), false, registry, rng));
      xy_down_.push_back(make_xy_conv(dn + ".xy2", xy_spec_at(l), xy_spec_at(l),
                                      config_.use_dscn, registry, rng));
      auto side_in = l == 0 ? lift_spec : side_trunk_spec(l - 1);
      const bool final_here = strict && levels == 1;  // depth-1: last side conv overall
      side_down_.push_back(make_side_conv(dn + ".s1", side_in, side_trunk_spec(l), false,
                                          registry, rng));
      side_down_.push_back(make_side_conv(dn + ".s2", side_trunk_spec(l),
                                          final_here ? side_out_spec : side_trunk_spec(l),
                                          config_.side_dcn, registry, rng));
      auto s2tp_side = final_here ? side_out_spec : side_trunk_spec(l);
      s2tp_down_.push_back(make_s2tp(dn + ".s2tp", s2tp_side, config_.side_channels[l],
                                     xy_spec_at(l), registry, rng));
    }
    // up path
    for (int l = levels - 2; l >= 0; --l) {
      std::string un = "enc.u" + std::to_string(l);
      auto cat_spec = xy_spec_at(l + 1).concat(xy_spec_at(l));
      xy_up_.push_back(make_xy_conv(un + ".xy", cat_spec, xy_spec_at(l), false, registry, rng));
      auto side_cat = side_trunk_spec(l + 1).concat(side_trunk_spec(l));
      const bool final_here = strict && l == 0;
      side_up_.push_back(make_side_conv(un + ".s", side_cat,
                                        final_here ? side_out_spec : side_trunk_spec(l), false,
                                        registry, rng));
      auto s2tp_side = final_here ? side_out_spec : side_trunk_spec(l);
      s2tp_up_.push_back(make_s2tp(un + ".s2tp", s2tp_side, config_.side_channels[l],
                                   xy_spec_at(l), registry, rng));
    }
  }

  const EncoderConfig& config() const { return config_; }

  RepresentationSpec xy_out_spec() const {
    return config_.mode == EncoderMode::kConventional
               ? RepresentationSpec::trivials(group_, config_.xy_regular_blocks[0] * group_.order)
               : RepresentationSpec::regulars(group_, config_.xy_regular_blocks[0]);
  }

  RepresentationSpec query_spec() const {
    return xy_out_spec().concat(RepresentationSpec::trivials(group_, config_.side_channels[0]));
  }

  GridGeometry geometry() const {
    return GridGeometry::cube(config_.grid_size, config_.workspace_m);
  }

  // Component access for the equivariance audit.
  const LiftingConv3d<T>* lift_layer() const {
    return config_.mode == EncoderMode::kConventional ? nullptr : &lift_;
  }
  const std::vector<detail::XyConv<T>>& xy_down_layers() const { return xy_down_; }
  const std::vector<detail::XyConv<T>>& xy_up_layers() const { return xy_up_; }

  // Audit negative control: break the first XY kernel's constraint.
  void corrupt_for_test(double epsilon = 0.05) {
    C4G_CHECK(!xy_down_.empty() && config_.mode == EncoderMode::kEquivariant, ErrorKind::kState,
              "corruption hook needs an equivariant XY branch");
    xy_down_[0].steerable.mutable_kernel().corrupt_basis_for_test(epsilon);
  }

  // Full pipeline: lift -> project -> dual-branch UNet with S2TP.
  TriplaneFeatures<T> encode(const Tensor<T>& tsdf) const {
    C4G_CHECK_SHAPE(tsdf.rank() == 4 && tsdf.shape()[0] == 1,
                    "encode expects a [1,S,S,S] TSDF, got " << shape_str(tsdf.shape()));
    C4G_CHECK(tsdf.shape()[1] == config_.grid_size && tsdf.shape()[2] == config_.grid_size &&
                  tsdf.shape()[3] == config_.grid_size,
              ErrorKind::kGeometry, "TSDF grid does not match configured size");
    Tensor<T> volume;
    if (config_.mode == EncoderMode::kConventional) {
      volume = relu(plain_lift_.forward(tsdf));
    } else {
      // pointwise nonlinearity on regular blocks is exactly equivariant
      volume = gated_nonlinearity(lift_.forward(tsdf).data, lift_.out_spec(), 0);
    }
    auto planes = project_to_planes(volume);
    Tensor<T> xy = planes.xy, xz = planes.xz, yz = planes.yz;

    const int levels = config_.depth();
    std::vector<Tensor<T>> skip_xy, skip_xz, skip_yz;
    for (int l = 0; l < levels; ++l) {
      if (l > 0) {
        xy = avgpool2x2(xy);
        xz = avgpool2x2(xz);
        yz = avgpool2x2(yz);
      }
      xy = xy_down_[2 * l].forward(xy);
      xy = xy_down_[2 * l + 1].forward(xy);
      xz = side_down_[2 * l].forward(xz);
      xz = side_down_[2 * l + 1].forward(xz);
      yz = side_down_[2 * l].forward(yz);
      yz = side_down_[2 * l + 1].forward(yz);
      xy = s2tp_down_[l].apply(xy, xz, yz);
      if (l + 1 < levels) {
        skip_xy.push_back(xy);
        skip_xz.push_back(xz);
        skip_yz.push_back(yz);
      }
    }
    for (int i = 0; i < levels - 1; ++i) {
      int l = levels - 2 - i;
      xy = concat<T>({upsample2x(xy), skip_xy[l]}, 0);
      xz = concat<T>({upsample2x(xz), skip_xz[l]}, 0);
      yz = concat<T>({upsample2x(yz), skip_yz[l]}, 0);
      xy = xy_up_[i].forward(xy);
      xz = side_up_[i].forward(xz);
      yz = side_up_[i].forward(yz);
      xy = s2tp_up_[i].apply(xy, xz, yz);
    }
    return {xy, xy_out_spec(), xz, yz, geometry()};
  }

 private:
  int64_t lift_channels() const { return config_.lift_regular_blocks * group_.order; }

  detail::XyConv<T> make_xy_conv(const std::string& name, RepresentationSpec in,
                                 RepresentationSpec out, bool want_dscn, ParamRegistry<T>& registry,
                                 Rng& rng) {
    detail::XyConv<T> c;
    c.mode = config_.mode;
    c.out_spec = out;
    if (config_.mode == EncoderMode::kConventional) {
      // same channel widths, unconstrained kernels
      c.plain = Conv2dLayer<T>(name, in.dim(), out.dim(), 3, registry, rng);
      return c;
    }
    if (want_dscn) {
      c.is_dscn = true;
      c.dscn = DeformableSteerableConv2d<T>(name, in, out, 3, registry, rng,
                                            config_.dscn_max_offset);
    } else {
      c.steerable = SteerableConv2d<T>(name, in, out, 3, true, registry, rng);
    }
    return c;
  }

  bool strict_side() const {
    return config_.mode == EncoderMode::kEquivariant &&
           config_.side_mode == SideMode::kReflectionInvariant;
  }

  detail::SideConv<T> make_side_conv(const std::string& name, const RepresentationSpec& in,
                                     const RepresentationSpec& out, bool want_dcn,
                                     ParamRegistry<T>& registry, Rng& rng) {
    detail::SideConv<T> c;
    const bool conventional = config_.mode == EncoderMode::kConventional;
    // DCN is a mixed-architecture option; the strict branch keeps typed
    // flip-symmetric kernels (learned offsets would break flip commutation)
    bool dcn_ok = want_dcn && !strict_side();
    if (dcn_ok) {
      c.is_dcn = true;
      c.dcn = DeformableConv2dLayer<T>(name, in.dim(), out.dim(), 3, registry, rng);
    } else if (!conventional && strict_side()) {
      c.typed = true;
      c.flip_typed = SteerableConv2d<T>(name, in, out, 3, true, registry, rng,
                                        KernelFamily::kChannelFlip);
    } else {
      c.plain = Conv2dLayer<T>(name, in.dim(), out.dim(), 3, registry, rng);
    }
    return c;
  }

  detail::S2tp<T> make_s2tp(const std::string& name, const RepresentationSpec& side_spec,
                            int side_ch, RepresentationSpec xy_spec, ParamRegistry<T>& registry,
                            Rng& rng) {
    detail::S2tp<T> s;
    s.enabled = config_.s2tp;
    s.typed = strict_side();
    if (!config_.s2tp) return s;
    if (s.typed) {
      s.typed_f = SteerableConv2d<T>(name, side_spec, xy_spec, 1, true, registry, rng);
    } else {
      s.plain_f = Conv2dLayer<T>(name, side_ch, xy_spec.dim(), 1, registry, rng);
    }
    return s;
  }

  EncoderConfig config_;
  CyclicGroup group_;
  LiftingConv3d<T> lift_;
  Conv3dLayer<T> plain_lift_;
  std::vector<detail::XyConv<T>> xy_down_, xy_up_;
  std::vector<detail::SideConv<T>> side_down_, side_up_;
  std::vector<detail::S2tp<T>> s2tp_down_, s2tp_up_;
};

}  // namespace c4g
