#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

namespace gaf {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Twist coordinates (rotation part first, then translation part).
using Twist = Eigen::Matrix<double, 6, 1>;

class GeometryError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Hamilton quaternion, w + xi + yj + zk.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    static Quaternion identity() { return {}; }
    static Quaternion from_axis_angle(const Vec3& axis, double angle);
    static Quaternion from_rotation_vector(const Vec3& omega);
    static Quaternion from_matrix(const Mat3& rotation);

    double norm() const;
    Quaternion normalized() const;
    /// Normalized with w >= 0.
    Quaternion canonical() const;
    Quaternion conjugate() const { return {w, -x, -y, -z}; }
    Mat3 to_matrix() const;
    Vec3 rotate(const Vec3& v) const;
    Vec4 coeffs_wxyz() const { return {w, x, y, z}; }

    friend bool operator==(const Quaternion&, const Quaternion&) = default;
};

Quaternion operator*(const Quaternion& a, const Quaternion& b);

/// Rotation matrix of q / |q| and its derivative with respect to the raw
/// (unnormalized) quaternion components (w, x, y, z).
struct RotationJacobian {
    Mat3 rotation;
    std::array<Mat3, 4> d_rotation;
};
RotationJacobian rotation_with_jacobian(const Quaternion& raw);

/// Rigid transform x -> R x + t, rotation stored as a unit quaternion.
struct Se3 {
    Quaternion rotation;
    Vec3 translation = Vec3::Zero();

    static Se3 identity() { return {}; }
    static Se3 from_translation(const Vec3& t) { return {Quaternion::identity(), t}; }
    static Se3 from_rotation(const Quaternion& q) { return {q, Vec3::Zero()}; }
    static Se3 from_matrix(const Mat4& m);

    Se3 inverse() const;
    Vec3 apply(const Vec3& p) const { return rotation.rotate(p) + translation; }
    Mat4 matrix() const;
    Mat3 rotation_matrix() const { return rotation.to_matrix(); }
    /// Rotation angle in radians, in [0, pi].
    double angle() const;

    friend bool operator==(const Se3& a, const Se3& b)
    {
        return a.rotation == b.rotation && a.translation == b.translation;
    }
};

/// Rotation about +z by angle radians.
Se3 rot_z(double angle);

/// Result applies b first, then a.
Se3 se3_compose(const Se3& a, const Se3& b);

Se3 se3_exp(const Twist& xi);
/// Throws GeometryError when the rotation angle is within 1e-6 of pi.
Twist se3_log(const Se3& T);
/// Screw-linear interpolation exp(tau * log(T)); exact at both endpoints.
Se3 se3_interpolate(const Se3& T, double tau);

Mat3 skew(const Vec3& v);

/// Rotation angle between two poses (degrees) and translation distance.
struct PoseError {
    double rotation_deg = 0.0;
    double translation = 0.0;
    friend bool operator==(const PoseError&, const PoseError&) = default;
};
PoseError pose_error(const Se3& a, const Se3& b);

inline constexpr double kScaleFloor = 1e-4;
inline constexpr double kNearPlane = 0.01;
inline constexpr double kBlur = 0.3;

/// Sigma = R diag(s)^2 R^T, with s clamped to the scale floor.
Mat3 covariance_from_rs(const Quaternion& r, const Vec3& s);

/// Pinhole camera; +z forward, +x right, +y down. Pixel (u, v) samples the
/// continuous image coordinate (u, v).
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;
    Se3 world_to_camera;

    /// Throws GeometryError when intrinsics are out of range.
    void validate() const;
    Vec3 center() const { return world_to_camera.inverse().translation; }

    /// Camera at eye looking at target; up is the world direction that maps
    /// to image -y.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                          int width, int height);
};

struct ProjectedGaussian {
    Vec2 mean;
    Mat2 cov;  // includes the blur regularizer
    double depth = 0.0;
    Vec3 camera_point;
};

/// Returns nullopt when the camera-frame depth is at or below the near plane.
std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov,
                                                  const Camera& cam);

}  // namespace gaf
