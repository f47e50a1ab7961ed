#include "hcmarl/ops.hpp"

#include <cmath>
#include <sstream>

namespace hcmarl {

namespace {

std::string dims(const Tensor& t) {
  std::ostringstream os;
  os << t.rows() << "x" << t.cols();
  return os.str();
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " +
                     dims(b));
  }
}

void require_finite(const char* op, const Matrix& m) {
  if (!m.allFinite()) {
    throw std::domain_error(std::string(op) + ": non-finite input");
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner extents differ " + dims(a) + " * " +
                     dims(b));
  }
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(a.value() * b.value(), {a, b},
                             [an, bn](const Matrix& g) {
                               if (an->requires_grad)
                                 an->accumulate(g * bn->value.transpose());
                               if (bn->requires_grad)
                                 bn->accumulate(an->value.transpose() * g);
                             });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(a.value() + b.value(), {a, b},
                             [an, bn](const Matrix& g) {
                               an->accumulate(g);
                               bn->accumulate(g);
                             });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(a.value() - b.value(), {a, b},
                             [an, bn](const Matrix& g) {
                               an->accumulate(g);
                               if (bn->requires_grad) bn->accumulate(-g);
                             });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto an = a.node();
  auto bn = b.node();
  return Tensor::make_result(
      a.value().cwiseProduct(b.value()), {a, b}, [an, bn](const Matrix& g) {
        if (an->requires_grad) an->accumulate(g.cwiseProduct(bn->value));
        if (bn->requires_grad) bn->accumulate(g.cwiseProduct(an->value));
      });
}

Tensor add_row(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols()) {
    throw ShapeError("add_row: bias " + dims(bias) + " does not fit " +
                     dims(a));
  }
  auto an = a.node();
  auto bn = bias.node();
  Matrix out = a.value();
  out.rowwise() += bias.value().row(0);
  return Tensor::make_result(std::move(out), {a, bias},
                             [an, bn](const Matrix& g) {
                               an->accumulate(g);
                               if (bn->requires_grad)
                                 bn->accumulate(g.colwise().sum());
                             });
}

Tensor mul_col(const Tensor& a, const Tensor& column) {
  if (column.cols() != 1 || column.rows() != a.rows()) {
    throw ShapeError("mul_col: column " + dims(column) + " does not fit " +
                     dims(a));
  }
  auto an = a.node();
  auto cn = column.node();
  Matrix out = a.value().array().colwise() * column.value().col(0).array();
  return Tensor::make_result(
      std::move(out), {a, column}, [an, cn](const Matrix& g) {
        if (an->requires_grad) {
          Matrix ga = g.array().colwise() * cn->value.col(0).array();
          an->accumulate(ga);
        }
        if (cn->requires_grad) {
          cn->accumulate(g.cwiseProduct(an->value).rowwise().sum());
        }
      });
}

Tensor scale(const Tensor& a, double s) {
  auto an = a.node();
  return Tensor::make_result(a.value() * s, {a},
                             [an, s](const Matrix& g) { an->accumulate(g * s); });
}

Tensor add_scalar(const Tensor& a, double s) {
  auto an = a.node();
  Matrix out = a.value().array() + s;
  return Tensor::make_result(std::move(out), {a},
                             [an](const Matrix& g) { an->accumulate(g); });
}

Tensor tanh(const Tensor& a) {
  auto an = a.node();
  Matrix out = a.value().array().tanh();
  Matrix y = out;
  return Tensor::make_result(std::move(out), {a}, [an, y](const Matrix& g) {
    an->accumulate(g.array() * (1.0 - y.array().square()));
  });
}

Tensor relu(const Tensor& a) {
  auto an = a.node();
  Matrix out = a.value().cwiseMax(0.0);
  return Tensor::make_result(std::move(out), {a}, [an](const Matrix& g) {
    an->accumulate((an->value.array() > 0.0).select(g, 0.0));
  });
}

Tensor exp(const Tensor& a) {
  auto an = a.node();
  Matrix out = a.value().array().exp();
  Matrix y = out;
  return Tensor::make_result(std::move(out), {a}, [an, y](const Matrix& g) {
    an->accumulate(g.cwiseProduct(y));
  });
}

Tensor square(const Tensor& a) {
  auto an = a.node();
  return Tensor::make_result(a.value().array().square(), {a},
                             [an](const Matrix& g) {
                               an->accumulate(2.0 * g.cwiseProduct(an->value));
                             });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  require_same_shape("minimum", a, b);
  auto an = a.node();
  auto bn = b.node();
  // Ties route the gradient to `a`.
  Matrix out = a.value().cwiseMin(b.value());
  return Tensor::make_result(
      std::move(out), {a, b}, [an, bn](const Matrix& g) {
        auto take_a = (an->value.array() <= bn->value.array());
        if (an->requires_grad) an->accumulate(take_a.select(g, 0.0));
        if (bn->requires_grad) bn->accumulate(take_a.select(0.0, g));
      });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
  auto an = a.node();
  Matrix out = a.value().cwiseMax(lo).cwiseMin(hi);
  return Tensor::make_result(std::move(out), {a}, [an, lo, hi](const Matrix& g) {
    auto inside = (an->value.array() >= lo) && (an->value.array() <= hi);
    an->accumulate(inside.select(g, 0.0));
  });
}

Tensor sum(const Tensor& a) {
  auto an = a.node();
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return Tensor::make_result(std::move(out), {a}, [an](const Matrix& g) {
    an->accumulate(Matrix::Constant(an->value.rows(), an->value.cols(), g(0, 0)));
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean: empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum_cols(const Tensor& a) {
  auto an = a.node();
  Matrix out = a.value().rowwise().sum();
  return Tensor::make_result(std::move(out), {a}, [an](const Matrix& g) {
    Matrix ga = g.col(0).replicate(1, an->value.cols());
    an->accumulate(ga);
  });
}

Tensor mean_rows(const Tensor& a) {
  if (a.rows() == 0) throw ShapeError("mean_rows: no rows");
  auto an = a.node();
  const double inv = 1.0 / static_cast<double>(a.rows());
  Matrix out = a.value().colwise().sum() * inv;
  return Tensor::make_result(std::move(out), {a}, [an, inv](const Matrix& g) {
    Matrix ga = (g * inv).replicate(an->value.rows(), 1);
    an->accumulate(ga);
  });
}

Tensor transpose(const Tensor& a) {
  auto an = a.node();
  Matrix out = a.value().transpose();
  return Tensor::make_result(std::move(out), {a}, [an](const Matrix& g) {
    an->accumulate(g.transpose());
  });
}

Tensor slice_cols(const Tensor& a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("slice_cols: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + dims(a));
  }
  auto an = a.node();
  Matrix out = a.value().middleCols(start, count);
  return Tensor::make_result(std::move(out), {a},
                             [an, start, count](const Matrix& g) {
                               Matrix ga = Matrix::Zero(an->value.rows(),
                                                        an->value.cols());
                               ga.middleCols(start, count) = g;
                               an->accumulate(ga);
                             });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) {
      throw ShapeError("concat_cols: row counts differ (" + dims(p) + ")");
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::vector<Index> offsets;
  Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(c);
    c += p.cols();
  }
  return Tensor::make_result(
      std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
      [nodes, offsets](const Matrix& g) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if (!nodes[i]->requires_grad) continue;
          nodes[i]->accumulate(
              g.middleCols(offsets[i], nodes[i]->value.cols()));
        }
      });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) {
      throw ShapeError("concat_rows: column counts differ (" + dims(p) + ")");
    }
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<std::shared_ptr<detail::Node>> nodes;
  std::vector<Index> offsets;
  Index r = 0;
  for (const auto& p : parts) {
    out.middleRows(r, p.rows()) = p.value();
    nodes.push_back(p.node());
    offsets.push_back(r);
    r += p.rows();
  }
  return Tensor::make_result(
      std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
      [nodes, offsets](const Matrix& g) {
        for (std::size_t i = 0; i < nodes.size(); ++i) {
          if (!nodes[i]->requires_grad) continue;
          nodes[i]->accumulate(
              g.middleRows(offsets[i], nodes[i]->value.rows()));
        }
      });
}

Tensor gather_rows(const Tensor& table, std::span<const Index> rows) {
  std::vector<Index> idx(rows.begin(), rows.end());
  Matrix out(static_cast<Index>(idx.size()), table.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= table.rows()) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) +
                              " outside table of " +
                              std::to_string(table.rows()) + " rows");
    }
    out.row(static_cast<Index>(i)) = table.value().row(idx[i]);
  }
  auto tn = table.node();
  return Tensor::make_result(std::move(out), {table},
                             [tn, idx](const Matrix& g) {
                               Matrix gt = Matrix::Zero(tn->value.rows(),
                                                        tn->value.cols());
                               for (std::size_t i = 0; i < idx.size(); ++i) {
                                 gt.row(idx[i]) += g.row(static_cast<Index>(i));
                               }
                               tn->accumulate(gt);
                             });
}

Tensor pick(const Tensor& a, std::span<const Index> cols) {
  if (static_cast<Index>(cols.size()) != a.rows()) {
    throw ShapeError("pick: need one column index per row of " + dims(a));
  }
  std::vector<Index> idx(cols.begin(), cols.end());
  Matrix out(a.rows(), 1);
  for (Index r = 0; r < a.rows(); ++r) {
    if (idx[r] < 0 || idx[r] >= a.cols()) {
      throw std::out_of_range("pick: column " + std::to_string(idx[r]) +
                              " outside " + dims(a));
    }
    out(r, 0) = a.value()(r, idx[r]);
  }
  auto an = a.node();
  return Tensor::make_result(std::move(out), {a}, [an, idx](const Matrix& g) {
    Matrix ga = Matrix::Zero(an->value.rows(), an->value.cols());
    for (Index r = 0; r < ga.rows(); ++r) ga(r, idx[r]) = g(r, 0);
    an->accumulate(ga);
  });
}

Tensor softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("softmax: temperature must be positive");
  }
  require_finite("softmax", logits.value());
  Matrix y = softmax_rows(logits.value(), temperature);
  auto ln = logits.node();
  Matrix yc = y;
  return Tensor::make_result(
      std::move(y), {logits}, [ln, yc, temperature](const Matrix& g) {
        // dL/dz = y * (g - <g, y>) / T, row-wise.
        Vector dots = g.cwiseProduct(yc).rowwise().sum();
        Matrix gz = yc.array() * (g.colwise() - dots).array() / temperature;
        ln->accumulate(gz);
      });
}

Tensor log_softmax(const Tensor& logits, double temperature) {
  if (!(temperature > 0.0)) {
    throw std::invalid_argument("log_softmax: temperature must be positive");
  }
  require_finite("log_softmax", logits.value());
  Matrix y = log_softmax_rows(logits.value(), temperature);
  auto ln = logits.node();
  Matrix p = y.array().exp();
  return Tensor::make_result(
      std::move(y), {logits}, [ln, p, temperature](const Matrix& g) {
        Vector gsum = g.rowwise().sum();
        Matrix gz = (g - (p.array().colwise() * gsum.array()).matrix()) /
                    temperature;
        ln->accumulate(gz);
      });
}

Tensor cross_entropy_soft(const Matrix& target_probs,
                          const Tensor& pred_log_probs) {
  if (target_probs.rows() != pred_log_probs.rows() ||
      target_probs.cols() != pred_log_probs.cols()) {
    throw ShapeError("cross_entropy_soft: target " +
                     std::to_string(target_probs.rows()) + "x" +
                     std::to_string(target_probs.cols()) +
                     " vs prediction " + dims(pred_log_probs));
  }
  static const double kLogFloor = std::log(kProbabilityFloor);
  const Matrix& lp = pred_log_probs.value();
  Matrix clamped = lp.cwiseMax(kLogFloor);
  Matrix out(1, 1);
  out(0, 0) = -(target_probs.cwiseProduct(clamped)).sum();
  auto pn = pred_log_probs.node();
  Matrix t = target_probs;
  return Tensor::make_result(std::move(out), {pred_log_probs},
                             [pn, t](const Matrix& g) {
                               Matrix gp = (pn->value.array() >= kLogFloor)
                                               .select(-g(0, 0) * t, 0.0);
                               pn->accumulate(gp);
                             });
}

}  // namespace hcmarl
