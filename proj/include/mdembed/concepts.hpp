#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mdembed/error.hpp"

namespace mdembed {

// Seed concepts for synthetic data generation, grouped into four domains:
// 60 algorithms, 90 math theorems, 80 physics theorems, 30 finance formulas.
class ConceptCatalog {
 public:
  static const ConceptCatalog& builtin() {
    static ConceptCatalog cat = make_builtin();
    return cat;
  }

  const std::vector<std::string>& domains() const { return domains_; }

  const std::vector<std::string>& concepts(const std::string& domain) const {
    auto it = by_domain_.find(domain);
    if (it == by_domain_.end())
      throw value_error("ConceptCatalog: unknown domain '" + domain + "'");
    return it->second;
  }

  std::size_t total_count() const {
    std::size_t n = 0;
    for (const auto& [d, v] : by_domain_) n += v.size();
    return n;
  }

  // First n (domain, concept) pairs in round-robin order across domains,
  // which keeps small selections domain-diverse.
  std::vector<std::pair<std::string, std::string>> select(std::size_t n) const {
    std::vector<std::pair<std::string, std::string>> out;
    std::size_t round = 0;
    while (out.size() < n) {
      bool any = false;
      for (const auto& d : domains_) {
        const auto& list = by_domain_.at(d);
        if (round < list.size()) {
          any = true;
          if (out.size() < n) out.emplace_back(d, list[round]);
        }
      }
      if (!any)
        throw value_error("ConceptCatalog: requested " + std::to_string(n) +
                          " concepts but only " +
                          std::to_string(total_count()) + " exist");
      ++round;
    }
    return out;
  }

  // A concept matches its full name, the name with any parenthetical removed,
  // and the parenthetical content itself ("Depth First Search (DFS)" also
  // answers to "Depth First Search" and "DFS").
  static std::vector<std::string> aliases(const std::string& concept_name) {
    std::vector<std::string> out = {concept_name};
    auto open = concept_name.find('(');
    auto close = concept_name.find(')');
    if (open != std::string::npos && close != std::string::npos &&
        close > open) {
      std::string stripped = concept_name.substr(0, open);
      while (!stripped.empty() && stripped.back() == ' ') stripped.pop_back();
      if (!stripped.empty()) out.push_back(stripped);
      std::string inner = concept_name.substr(open + 1, close - open - 1);
      if (!inner.empty()) out.push_back(inner);
    }
    return out;
  }

  static bool mentions(const std::string& text,
                       const std::string& concept_name) {
    auto lower = [](std::string s) {
      std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) {
        return char(std::tolower(c));
      });
      return s;
    };
    std::string hay = lower(text);
    for (const auto& alias : aliases(concept_name))
      if (hay.find(lower(alias)) != std::string::npos) return true;
    return false;
  }

 private:
  static ConceptCatalog make_builtin();

  std::vector<std::string> domains_;
  std::map<std::string, std::vector<std::string>> by_domain_;
};

inline ConceptCatalog ConceptCatalog::make_builtin() {
  ConceptCatalog cat;
  cat.domains_ = {"algorithm", "math theorem", "physics theorem",
                  "finance formula"};
  cat.by_domain_["algorithm"] = {
      "Sweep Line Algorithm", "Kahn's Algorithm", "Dijkstra's Algorithm",
      "Game Theory", "Two Pointers", "N-Queens Problem",
      "Depth First Search (DFS)", "Prefix Sum", "Greedy Algorithm",
      "Bucket Sort", "Breadth First Search (BFS)",
      "Longest Common Subsequence (LCS)", "Huffman Coding",
      "Manhattan Distance", "Topological Sorting", "Rod Cutting Problem",
      "Binary Search", "Knapsack Algorithm (0/1 Knapsack)",
      "Floyd-Warshall Algorithm", "Bellman-Ford Algorithm", "Merge Sort",
      "Quick Sort", "Heap Sort", "Bubble Sort", "Insertion Sort",
      "Selection Sort", "Kruskal's Algorithm", "Prim's Algorithm",
      "Kadane's Algorithm", "Rabin-Karp Algorithm",
      "Knuth-Morris-Pratt (KMP) Algorithm", "Boyer-Moore Algorithm",
      "Longest Increasing Subsequence (LIS)", "Edit Distance",
      "Sieve of Eratosthenes", "Tarjan's Algorithm", "Kosaraju's Algorithm",
      "Z Algorithm", "LRU Cache Algorithm", "A-star search algorithm",
      "Hamiltonian Path", "Substring Search Algorithm", "Permutations",
      "Combinations", "Knapsack DP with Bitmasking", "Matrix Exponentiation",
      "Square Root Decomposition", "Mo's Algorithm", "Strassen's Algorithm",
      "K-Means Clustering", "Gradient Descent",
      "Support Vector Machines (SVM)", "Aho-Corasick Algorithm",
      "Ford-Fulkerson Algorithm", "Trapping Rain Water",
      "Matrix Chain Multiplication", "Coin Change Problem",
      "Palindrome Partitioning", "Sudoku Solver", "Newton's Method"};
  cat.by_domain_["math theorem"] = {
      "Newton's Sums", "Pigeonhole Principle", "Chicken McNugget Theorem",
      "Simon's Favorite Factoring Trick", "Fermat's Little Theorem",
      "Ptolemys theorem", "Euler's Identity", "Euclidean algorithm",
      "Cauchy-Riemann Equations (Complex Analysis)", "Vieta's Formulas",
      "Triangle Inequality", "Power of a Point", "Central Limit Theorem",
      "Pick's Theorem", "Shoelace Theorem", "Legendre's formula",
      "Principle of Inclusion Exclusion", "Ceva's Theorem",
      "Logarithm: Change of Base Formula", "Stars and Bars formula",
      "Eigenvalue equation", "Intermediate Value Theorem",
      "Mass point geometry theorem", "Geometric probability in 2D",
      "Fourier Transform", "Cramer's Rule", "Vertex cover in graph theory",
      "One-sample t-test", "Z-transform", "Ramsey's Theorem",
      "Pollard's Rho Algorithm (Factorization)", "Chinese Remainder Theorem",
      "Taylor's Theorem", "Addition of Multiindices", "Bayes' Theorem",
      "Binomial Theorem", "Mean Value Theorem for Derivatives",
      "Pythagorean Theorem", "Lagrange's Theorem (Group Theory)",
      "The Chain Rule in calculus", "Green's Theorem",
      "Cauchy-Schwarz Inequality", "Divergence Theorem",
      "Second Part of the Fundamental Theorem of Calculus (FTC2)",
      "Quadratic Formula (for polynomials of degree 2)",
      "Fundamental Theorem of Arithmetic", "Rolle's Theorem",
      "De Moivre's Theorem", "Law of Large Numbers", "Cayley-Hamilton Theorem",
      "L'Hopital's Rule", "Singular Value Decomposition (SVD) Theorem",
      "The Squeeze Theorem", "Brouwer Fixed-Point Theorem",
      "Tychonoff's Theorem", "Bezout's Theorem", "Vandermonde's Identity",
      "Wilson's Theorem", "Markov Property", "Invertible Matrix Theorem",
      "Sylow Theorems", "Cantor's Theorem",
      "Heron's Formula (for the area of a triangle)", "Laplace Transform",
      "Bolzano-Weierstrass Theorem", "Weierstrass Approximation Theorem",
      "Cauchy's Mean Value Theorem", "Lindelof's Theorem",
      "Poisson Limit Theorem", "Mertens' Theorem", "Chebyshev's Inequality",
      "Markov's Inequality", "Jensen's Inequality", "Borel-Cantelli Lemma",
      "Chauvenet's Criterion", "Helly's Theorem", "Holder's Inequality",
      "Minkowski's Inequality", "Euler's Formula for Planar Graphs",
      "Hahn Decomposition Theorem", "Radon-Nikodym Theorem",
      "Kakutani Fixed-Point Theorem", "Sum of a Geometric Series Formula",
      "The Isoperimetric Inequality", "Spectral Theorem",
      "Power Rule (for derivatives)", "Hadamard's Determinant Theorem",
      "Borel's Theorem", "Runge's Theorem", "Euler's Formula for Polyhedra"};
  cat.by_domain_["physics theorem"] = {
      "Center-of-Mass Energy", "Planck's energy-frequency relation",
      "Magnification theorem", "Maximum Entropy Principle", "Heron's Formula",
      "Gibbs Free Energy", "Ideal Gas Law", "Torricelli's Law",
      "Coulomb's Law", "Gauss's Law for Electricity", "Kirchhoff's Laws",
      "Ohm's Law", "Millma's Theorem", "Carnot's Theorem", "Beer-Lambert Law",
      "Newton's Laws of Motion", "Lorentz Force",
      "First Law of Thermodynamics", "Work-Energy Theorem",
      "Maxwell's Equations", "Conservation of Mechanical Energy",
      "Kinetic Energy Theorem for Rotational Motion",
      "Conservation of Angular Momentum", "Torque-Angular Momentum Theorem",
      "Centripetal Force Formula (for an object in circular motion)",
      "Euler's Rotation Theorems", "Parallel Axis Theorem",
      "Elastic Collision", "Boucherot's Theorem (Power Factor Theorem)",
      "Tellegen's Theorem", "Law of Reflection", "Malus's Law",
      "Specific Heat Capacity Formula",
      "Optical Path Length (OPL) Theorem", "Snell's Law",
      "Huygens' Principle", "Young's Double-Slit Experiment",
      "Fraunhofer Diffraction Theory", "Fresnel Equations",
      "Planck's Law of Blackbody Radiation", "Stefan-Boltzmann Law",
      "Wien's Displacement Law", "Rayleigh-Jeans Law",
      "Compton Scattering Formula",
      "Electric Field Formula (from a point charge)",
      "Speed of Sound in air (at temperature T)",
      "Heat Transfer via Conduction (Fourier's Law)",
      "Pauli Exclusion Principle", "Energy Stored in a Capacitor Formula",
      "Einstein's Photoelectric Equation", "Bragg's Law",
      "Gauss's Law for Magnetism", "Faraday's Law of Induction", "Lenz's Law",
      "Work Done in an Adiabatic Process (Thermodynamics) Formula",
      "Ampere's Circuital Law", "Hooke's Law (for Springs)",
      "Laplace's Equation", "Poisson's Equation", "D'Alembert's Principle",
      "Lagrange's Equations of Motion", "Hamilton's Principle",
      "Virial Theorem", "Kepler's Laws of Planetary Motion",
      "Newton's Law of Universal Gravitation",
      "Magnetic Force on a Moving Charge Formula", "Schwarzschild Metric",
      "Lorentz Transformation", "Einstein's Energy-Mass Equivalence",
      "Shannon Entropy", "Dirac Equation",
      "Feynman Path Integral Formulation", "Landauer's Principle",
      "Onsager Reciprocity Relations", "Bernoulli's Equation (for fluid flow)",
      "Stokes' Law", "Reynolds Transport Theorem", "Conservation of Mass",
      "Thermal Conductivity Formula", "Lens Equation (for a thin lens)"};
  cat.by_domain_["finance formula"] = {
      "Binomial Model in finance", "Net Present Value (NPV)",
      "Future Value (FV) Formula", "Present Value (PV) Formula",
      "Discounted Cash Flow (DCF) Model", "Dividend Discount Model",
      "Capital Asset Pricing Model (CAPM)", "Gordon Growth Model (GGM)",
      "Binomial Option Pricing Model", "Bond Pricing Formula",
      "Yield to Maturity (YTM)", "Sharpe Ratio", "Macauley Duration",
      "Modified Duration", "Internal Rate of Return (IRR)",
      "Return on Equity (ROE)", "Value at Risk (VaR) Formula",
      "Z-Spread Formula", "Inventory Turnover Ratio",
      "GDP (Expenditure Approach)", "DuPont Analysis Formula",
      "Weighted Average Cost of Capital (WACC)", "Derivatives Forward Price",
      "Dividend Discount Model (DDM)", "Earnings Yield Formula",
      "Sustainable Growth Rate (SGR)", "Operating Leverage Formula",
      "Covariance Formula", "Variance of a Two-Asset Portfolio",
      "Profitability Index (PI)"};
  return cat;
}

// Generation template per domain: coding problems for algorithms, physics
// problems for physics theorems, math-style problems otherwise.
inline std::string qa_template_for_domain(const std::string& domain) {
  if (domain == "algorithm") return "qa_coding";
  if (domain == "physics theorem") return "qa_physics";
  return "qa_math";
}

}  // namespace mdembed
