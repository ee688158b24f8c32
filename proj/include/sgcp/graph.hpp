#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sgcp {

struct Edge {
    std::size_t i = 0;
    std::size_t j = 0;
    double w = 0.0;
};

/// Undirected weighted graph without self-loops. Each undirected edge is
/// stored once; the adjacency matrix is its symmetric expansion.
class Graph {
public:
    Graph() = default;

    std::size_t n_nodes() const noexcept { return n_; }
    const std::vector<Edge>& edges() const noexcept { return edges_; }
    const std::optional<std::vector<std::string>>& node_labels() const noexcept { return labels_; }

    Eigen::MatrixXd adjacency() const;
    Eigen::VectorXd degrees() const;

    friend Graph build_graph(std::size_t n, const std::vector<Edge>& edge_list,
                             std::optional<std::vector<std::string>> labels);

private:
    std::size_t n_ = 0;
    std::vector<Edge> edges_;
    std::optional<std::vector<std::string>> labels_;
};

/// Validates and canonicalises an edge list (i < j after ordering).
/// Throws SelfLoop, NegativeWeight, IndexOutOfRange or DuplicateEdge.
Graph build_graph(std::size_t n, const std::vector<Edge>& edge_list,
                  std::optional<std::vector<std::string>> labels = std::nullopt);

/// Builds a graph from a dense symmetric adjacency with zero diagonal.
Graph graph_from_adjacency(const Eigen::MatrixXd& adjacency, double symmetry_tol = 1e-12);

struct Laplacian {
    Eigen::MatrixXd matrix;
    Eigen::VectorXd degree;
};

/// I - D^{-1/2} A D^{-1/2}. Isolated nodes use D^{-1/2} = 0, which leaves an
/// identity row/column for them.
Laplacian normalized_laplacian(const Graph& g);

struct SpectralBasis {
    Eigen::VectorXd eigenvalues;   // ascending
    Eigen::MatrixXd eigenvectors;  // column i pairs with eigenvalues[i]

    std::size_t size() const noexcept { return static_cast<std::size_t>(eigenvalues.size()); }
    double lambda_max() const { return eigenvalues.size() ? eigenvalues(eigenvalues.size() - 1) : 0.0; }
};

struct JacobiOptions {
    int max_sweeps = 100;
    double relative_tol = 1e-12;
};

/// Cyclic Jacobi eigendecomposition of a dense symmetric matrix.
///
/// Eigenvalues are returned ascending. Each eigenvector is normalised so its
/// first entry with magnitude above 1e-12 is positive, which makes the output
/// reproducible bit for bit for identical input. Throws ConvergenceFailure if
/// the off-diagonal mass is still above tolerance after the sweep cap.
SpectralBasis eigendecompose(const Eigen::MatrixXd& symmetric, const JacobiOptions& opts = {});
SpectralBasis eigendecompose(const Laplacian& lap, const JacobiOptions& opts = {});

// CSV ingestion. Edge lists use the header `i,j,w` with 0-based indices; the
// dense form is an n x n matrix without header.
Graph load_edge_list_csv(const std::filesystem::path& path, std::optional<std::size_t> n_nodes = std::nullopt);
Graph load_dense_adjacency_csv(const std::filesystem::path& path);
void save_edge_list_csv(const Graph& g, const std::filesystem::path& path);

}  // namespace sgcp
