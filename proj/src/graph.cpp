#include "sgcp/graph.hpp"

#include "csv.hpp"
#include "sgcp/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

namespace sgcp {

Graph build_graph(std::size_t n, const std::vector<Edge>& edge_list,
                  std::optional<std::vector<std::string>> labels) {
    if (n == 0) {
        throw Error(Errc::IndexOutOfRange, "graph needs at least one node");
    }
    if (labels && labels->size() != n) {
        throw Error(Errc::DimensionMismatch, "node label count differs from n");
    }
    Graph g;
    g.n_ = n;
    g.labels_ = std::move(labels);
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (const auto& e : edge_list) {
        if (e.i >= n || e.j >= n) {
            throw Error(Errc::IndexOutOfRange,
                        "edge (" + std::to_string(e.i) + "," + std::to_string(e.j) + ") with n=" + std::to_string(n));
        }
        if (e.i == e.j) {
            throw Error(Errc::SelfLoop, "self-loop at node " + std::to_string(e.i));
        }
        if (!(e.w >= 0.0) || !std::isfinite(e.w)) {
            throw Error(Errc::NegativeWeight, "edge weight " + std::to_string(e.w));
        }
        const auto key = std::minmax(e.i, e.j);
        if (!seen.insert(key).second) {
            throw Error(Errc::DuplicateEdge,
                        "edge (" + std::to_string(key.first) + "," + std::to_string(key.second) + ") listed twice");
        }
        g.edges_.push_back({key.first, key.second, e.w});
    }
    return g;
}

Graph graph_from_adjacency(const Eigen::MatrixXd& a, double symmetry_tol) {
    if (a.rows() != a.cols()) {
        throw Error(Errc::DimensionMismatch, "adjacency must be square");
    }
    const auto n = static_cast<std::size_t>(a.rows());
    std::vector<Edge> edges;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (a(i, i) != 0.0) {
            throw Error(Errc::SelfLoop, "nonzero diagonal at node " + std::to_string(i));
        }
        for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - a(j, i)) > symmetry_tol) {
                throw Error(Errc::ShapeMismatch, "adjacency is not symmetric at (" + std::to_string(i) + "," +
                                                     std::to_string(j) + ")");
            }
            if (a(i, j) != 0.0) {
                edges.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), a(i, j)});
            }
        }
    }
    return build_graph(n, edges);
}

Eigen::MatrixXd Graph::adjacency() const {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    for (const auto& e : edges_) {
        const auto i = static_cast<Eigen::Index>(e.i);
        const auto j = static_cast<Eigen::Index>(e.j);
        a(i, j) = e.w;
        a(j, i) = e.w;
    }
    return a;
}

Eigen::VectorXd Graph::degrees() const {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_));
    for (const auto& e : edges_) {
        d(static_cast<Eigen::Index>(e.i)) += e.w;
        d(static_cast<Eigen::Index>(e.j)) += e.w;
    }
    return d;
}

Laplacian normalized_laplacian(const Graph& g) {
    const Eigen::MatrixXd a = g.adjacency();
    Laplacian lap;
    lap.degree = g.degrees();
    const auto n = a.rows();
    Eigen::VectorXd inv_sqrt(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        inv_sqrt(i) = lap.degree(i) > 0.0 ? 1.0 / std::sqrt(lap.degree(i)) : 0.0;
    }
    lap.matrix = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (a(i, j) != 0.0) {
                lap.matrix(i, j) -= inv_sqrt(i) * a(i, j) * inv_sqrt(j);
            }
        }
    }
    return lap;
}

namespace {

double off_diagonal_norm(const Eigen::MatrixXd& m) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            if (i != j) sum += m(i, j) * m(i, j);
        }
    }
    return std::sqrt(sum);
}

}  // namespace

SpectralBasis eigendecompose(const Eigen::MatrixXd& symmetric, const JacobiOptions& opts) {
    if (symmetric.rows() != symmetric.cols()) {
        throw Error(Errc::DimensionMismatch, "eigendecompose needs a square matrix");
    }
    const Eigen::Index n = symmetric.rows();
    Eigen::MatrixXd a = 0.5 * (symmetric + symmetric.transpose());
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    const double target = opts.relative_tol * std::max(a.norm(), std::numeric_limits<double>::min());

    bool converged = false;
    for (int sweep = 0; sweep <= opts.max_sweeps; ++sweep) {
        if (off_diagonal_norm(a) <= target) {
            converged = true;
            break;
        }
        if (sweep == opts.max_sweeps) break;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = 0.0;
                a(q, p) = 0.0;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (!converged) {
        throw Error(Errc::ConvergenceFailure,
                    "Jacobi did not converge in " + std::to_string(opts.max_sweeps) +
                        " sweeps, off-diagonal norm " + std::to_string(off_diagonal_norm(a)));
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });

    SpectralBasis basis;
    basis.eigenvalues.resize(n);
    basis.eigenvectors.resize(n, n);
    for (Eigen::Index col = 0; col < n; ++col) {
        const Eigen::Index src = order[static_cast<std::size_t>(col)];
        basis.eigenvalues(col) = a(src, src);
        Eigen::VectorXd vec = v.col(src);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (std::abs(vec(k)) > 1e-12) {
                if (vec(k) < 0.0) vec = -vec;
                break;
            }
        }
        basis.eigenvectors.col(col) = vec;
    }
    return basis;
}

SpectralBasis eigendecompose(const Laplacian& lap, const JacobiOptions& opts) {
    return eigendecompose(lap.matrix, opts);
}

Graph load_edge_list_csv(const std::filesystem::path& path, std::optional<std::size_t> n_nodes) {
    const auto rows = detail::read_csv(path);
    if (rows.empty() || rows.front().cells != std::vector<std::string>{"i", "j", "w"}) {
        throw Error(Errc::ParseError, path.string() + ": expected header i,j,w");
    }
    std::vector<Edge> edges;
    std::size_t max_index = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.cells.size() != 3) {
            throw Error(Errc::ParseError, path.string() + ": expected 3 cells at line " + std::to_string(row.line));
        }
        const double fi = detail::parse_number(row.cells[0], row.line, 1);
        const double fj = detail::parse_number(row.cells[1], row.line, 2);
        const double w = detail::parse_number(row.cells[2], row.line, 3);
        if (fi < 0 || fj < 0 || fi != std::floor(fi) || fj != std::floor(fj)) {
            throw Error(Errc::IndexOutOfRange, "non-integral or negative index at line " + std::to_string(row.line));
        }
        Edge e{static_cast<std::size_t>(fi), static_cast<std::size_t>(fj), w};
        max_index = std::max({max_index, e.i, e.j});
        edges.push_back(e);
    }
    const std::size_t n = n_nodes.value_or(edges.empty() ? 1 : max_index + 1);
    return build_graph(n, edges);
}

Graph load_dense_adjacency_csv(const std::filesystem::path& path) {
    const auto rows = detail::read_csv(path);
    const auto n = rows.size();
    if (n == 0) {
        throw Error(Errc::ParseError, path.string() + ": empty adjacency");
    }
    Eigen::MatrixXd a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t r = 0; r < n; ++r) {
        if (rows[r].cells.size() != n) {
            throw Error(Errc::ParseError,
                        path.string() + ": row at line " + std::to_string(rows[r].line) + " has wrong width");
        }
        for (std::size_t c = 0; c < n; ++c) {
            a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                detail::parse_number(rows[r].cells[c], rows[r].line, c + 1);
        }
    }
    return graph_from_adjacency(a);
}

void save_edge_list_csv(const Graph& g, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(Errc::IoError, "cannot write " + path.string());
    }
    out << "i,j,w\n";
    for (const auto& e : g.edges()) {
        out << e.i << ',' << e.j << ',' << detail::format_double(e.w) << '\n';
    }
}

}  // namespace sgcp
