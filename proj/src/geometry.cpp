#include "gaf/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>

namespace gaf {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Coefficients of the SE(3) left Jacobian V = I + b W + c W^2.
void left_jacobian_coeffs(double theta, double& b, double& c)
{
    if (theta < 0.1) {
        const double t2 = theta * theta;
        b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0 - t2 * t2 * t2 / 40320.0;
        c = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0 - t2 * t2 * t2 / 362880.0;
    } else {
        const double t2 = theta * theta;
        b = (1.0 - std::cos(theta)) / t2;
        c = (theta - std::sin(theta)) / (t2 * theta);
    }
}

}  // namespace

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle)
{
    const Vec3 n = axis.normalized();
    const double h = 0.5 * angle;
    const double s = std::sin(h);
    return {std::cos(h), n.x() * s, n.y() * s, n.z() * s};
}

Quaternion Quaternion::from_rotation_vector(const Vec3& omega)
{
    const double theta = omega.norm();
    const double h = 0.5 * theta;
    // sin(h) / theta, series near zero
    const double k = theta < 1e-6 ? 0.5 - theta * theta / 48.0 : std::sin(h) / theta;
    return {std::cos(h), omega.x() * k, omega.y() * k, omega.z() * k};
}

Quaternion Quaternion::from_matrix(const Mat3& rotation)
{
    const Eigen::Quaterniond q(rotation);
    return Quaternion{q.w(), q.x(), q.y(), q.z()}.canonical();
}

double Quaternion::norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

Quaternion Quaternion::normalized() const
{
    const double n = norm();
    if (!(n > 1e-12)) {
        throw GeometryError("quaternion is not normalizable");
    }
    return {w / n, x / n, y / n, z / n};
}

Quaternion Quaternion::canonical() const
{
    const Quaternion q = normalized();
    return q.w < 0.0 ? Quaternion{-q.w, -q.x, -q.y, -q.z} : q;
}

Mat3 Quaternion::to_matrix() const
{
    const Quaternion q = normalized();
    const double ww = q.w, xx = q.x, yy = q.y, zz = q.z;
    Mat3 r;
    r << 1 - 2 * (yy * yy + zz * zz), 2 * (xx * yy - ww * zz), 2 * (xx * zz + ww * yy),
        2 * (xx * yy + ww * zz), 1 - 2 * (xx * xx + zz * zz), 2 * (yy * zz - ww * xx),
        2 * (xx * zz - ww * yy), 2 * (yy * zz + ww * xx), 1 - 2 * (xx * xx + yy * yy);
    return r;
}

Vec3 Quaternion::rotate(const Vec3& v) const { return to_matrix() * v; }

Quaternion operator*(const Quaternion& a, const Quaternion& b)
{
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

RotationJacobian rotation_with_jacobian(const Quaternion& raw)
{
    const double n = raw.norm();
    const Quaternion q = raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;

    // Derivatives of the unit-quaternion rotation polynomial, per component.
    std::array<Mat3, 4> dpoly;
    dpoly[0] << 0, -2 * z, 2 * y,
                2 * z, 0, -2 * x,
                -2 * y, 2 * x, 0;
    dpoly[1] << 0, 2 * y, 2 * z,
                2 * y, -4 * x, -2 * w,
                2 * z, 2 * w, -4 * x;
    dpoly[2] << -4 * y, 2 * x, 2 * w,
                2 * x, 0, 2 * z,
                -2 * w, 2 * z, -4 * y;
    dpoly[3] << -4 * z, -2 * w, 2 * x,
                2 * w, -4 * z, 2 * y,
                2 * x, 2 * y, 0;

    const std::array<double, 4> qh{w, x, y, z};
    RotationJacobian out;
    out.rotation = q.to_matrix();
    for (int j = 0; j < 4; ++j) {
        Mat3 d = Mat3::Zero();
        for (int k = 0; k < 4; ++k) {
            const double proj = ((k == j) ? 1.0 : 0.0) - qh[k] * qh[j];
            d += dpoly[k] * (proj / n);
        }
        out.d_rotation[j] = d;
    }
    return out;
}

Se3 Se3::from_matrix(const Mat4& m)
{
    return {Quaternion::from_matrix(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Se3 Se3::inverse() const
{
    const Quaternion qi = rotation.conjugate();
    return {qi, -qi.rotate(translation)};
}

Mat4 Se3::matrix() const
{
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation.to_matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
}

double Se3::angle() const
{
    const Quaternion q = rotation.canonical();
    const double v = std::sqrt(q.x * q.x + q.y * q.y + q.z * q.z);
    return 2.0 * std::atan2(v, q.w);
}

Se3 rot_z(double angle) { return Se3::from_rotation(Quaternion::from_axis_angle(Vec3::UnitZ(), angle)); }

Se3 se3_compose(const Se3& a, const Se3& b)
{
    return {a.rotation * b.rotation, a.rotation.rotate(b.translation) + a.translation};
}

Mat3 skew(const Vec3& v)
{
    Mat3 m;
    m << 0, -v.z(), v.y(),
         v.z(), 0, -v.x(),
         -v.y(), v.x(), 0;
    return m;
}

Se3 se3_exp(const Twist& xi)
{
    const Vec3 omega = xi.head<3>();
    const Vec3 v = xi.tail<3>();
    const double theta = omega.norm();
    double b = 0.0, c = 0.0;
    left_jacobian_coeffs(theta, b, c);
    const Mat3 W = skew(omega);
    const Mat3 V = Mat3::Identity() + b * W + c * W * W;
    return {Quaternion::from_rotation_vector(omega), V * v};
}

Twist se3_log(const Se3& T)
{
    const Quaternion q = T.rotation.canonical();
    const Vec3 u{q.x, q.y, q.z};
    const double s = u.norm();
    const double theta = 2.0 * std::atan2(s, q.w);
    if (theta > kPi - 1e-6) {
        throw GeometryError("se3_log: rotation angle too close to pi");
    }
    // theta / sin(theta/2), series near zero
    const double k = s < 1e-8 ? 2.0 / q.w * (1.0 - s * s / (3.0 * q.w * q.w)) : theta / s;
    const Vec3 omega = u * k;

    const Mat3 W = skew(omega);
    double coeff = 0.0;
    if (theta < 0.1) {
        const double t2 = theta * theta;
        coeff = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0 + t2 * t2 * t2 / 1209600.0;
    } else {
        coeff = (1.0 - theta * std::sin(theta) / (2.0 * (1.0 - std::cos(theta)))) / (theta * theta);
    }
    const Mat3 Vinv = Mat3::Identity() - 0.5 * W + coeff * W * W;

    Twist xi;
    xi.head<3>() = omega;
    xi.tail<3>() = Vinv * T.translation;
    return xi;
}

Se3 se3_interpolate(const Se3& T, double tau)
{
    if (!(tau >= 0.0 && tau <= 1.0)) {
        throw GeometryError("se3_interpolate: tau outside [0, 1]");
    }
    if (tau == 0.0) return Se3::identity();
    if (tau == 1.0) return T;
    return se3_exp(tau * se3_log(T));
}

PoseError pose_error(const Se3& a, const Se3& b)
{
    const Se3 rel = se3_compose(a.inverse(), b);
    return {rel.angle() * 180.0 / kPi, (a.translation - b.translation).norm()};
}

Mat3 covariance_from_rs(const Quaternion& r, const Vec3& s)
{
    const Mat3 R = r.to_matrix();
    const Vec3 clamped = s.cwiseMax(kScaleFloor);
    const Mat3 M = R * clamped.asDiagonal();
    Mat3 cov = M * M.transpose();
    // exact symmetry
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

void Camera::validate() const
{
    if (!(fx > 0.0 && fy > 0.0)) throw GeometryError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw GeometryError("camera image size must be positive");
    if (!(cx >= 0.0 && cx <= width && cy >= 0.0 && cy <= height)) {
        throw GeometryError("camera principal point outside the image");
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                       int width, int height)
{
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-9) {
        throw GeometryError("look_at: up vector parallel to viewing direction");
    }
    right.normalize();
    const Vec3 down = forward.cross(right);
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = forward.transpose();

    Camera cam;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * width;
    cam.cy = 0.5 * height;
    cam.width = width;
    cam.height = height;
    cam.world_to_camera = {Quaternion::from_matrix(R), -(R * eye)};
    return cam;
}

std::optional<ProjectedGaussian> project_gaussian(const Vec3& mean, const Mat3& cov,
                                                  const Camera& cam)
{
    const Mat3 W = cam.world_to_camera.rotation_matrix();
    const Vec3 pc = W * mean + cam.world_to_camera.translation;
    const double z = pc.z();
    if (!(z > kNearPlane)) {
        return std::nullopt;
    }
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),
         0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> T = J * W;
    Mat2 cov2 = T * cov * T.transpose();
    cov2(0, 1) = cov2(1, 0) = 0.5 * (cov2(0, 1) + cov2(1, 0));
    cov2(0, 0) += kBlur;
    cov2(1, 1) += kBlur;

    ProjectedGaussian out;
    out.mean = {cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy};
    out.cov = cov2;
    out.depth = z;
    out.camera_point = pc;
    return out;
}

}  // namespace gaf
