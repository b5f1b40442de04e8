"""Classifiers, regressors and clusterers used on entity-embedding features.

All of them follow the scikit-learn estimator protocol (``fit``/``predict``,
``get_params``) so they can be dropped into the same grids, but they are
written here so that their tie-breaking and numerical conventions are fixed.
Cosine distance is ``1 - cos``; a zero vector has cosine 0 to everything.
"""

from __future__ import annotations

import numba
import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..vectors import cosine_matrix


class TaskError(ValueError):
    pass


def cosine_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return 1.0 - cosine_matrix(a, b)


def _neighbors(train: np.ndarray, test: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` nearest train rows per test row, ties by lower index."""
    dist = cosine_distances(test, train)
    return np.argsort(dist, axis=1, kind="stable")[:, :k]


def _encode(y) -> tuple[np.ndarray, np.ndarray]:
    classes, codes = np.unique(np.asarray(y), return_inverse=True)
    if classes.shape[0] < 2:
        raise TaskError("training data has a single class")
    return classes, codes


# -- classification -----------------------------------------------------------


class GaussianNaiveBayes(ClassifierMixin, BaseEstimator):
    def __init__(self, var_floor: float = 1e-9):
        self.var_floor = var_floor

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = _encode(y)
        n_classes = self.classes_.shape[0]
        self.theta_ = np.zeros((n_classes, X.shape[1]))
        self.var_ = np.zeros((n_classes, X.shape[1]))
        counts = np.bincount(codes, minlength=n_classes)
        for c in range(n_classes):
            rows = X[codes == c]
            self.theta_[c] = rows.mean(axis=0)
            self.var_[c] = np.maximum(rows.var(axis=0), self.var_floor)
        self.log_prior_ = np.log(counts / counts.sum())
        return self

    def joint_log_likelihood(self, X) -> np.ndarray:
        check_is_fitted(self, "theta_")
        X = check_array(X, dtype=np.float64)
        ll = -0.5 * (np.log(2 * np.pi * self.var_)[None] + (X[:, None, :] - self.theta_[None]) ** 2 / self.var_[None])
        return self.log_prior_[None] + ll.sum(axis=2)

    def predict(self, X):
        return self.classes_[np.argmax(self.joint_log_likelihood(X), axis=1)]


class KNNClassifier(ClassifierMixin, BaseEstimator):
    """Majority vote of the ``k`` cosine-nearest neighbours; ties go to the smallest label."""

    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, self.codes_ = _encode(y)
        self.X_ = X
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=np.float64)
        k = min(self.k, self.X_.shape[0])
        idx = _neighbors(self.X_, X, k)
        votes = np.zeros((X.shape[0], self.classes_.shape[0]), dtype=np.int64)
        np.add.at(votes, (np.repeat(np.arange(X.shape[0]), k), self.codes_[idx].ravel()), 1)
        return self.classes_[np.argmax(votes, axis=1)]


@numba.njit(cache=True)
def _ovr_hinge_sgd(X, Y, order, lr, alpha, W, b):
    n_epochs = order.shape[0]
    n_classes = W.shape[0]
    d = X.shape[1]
    for e in range(n_epochs):
        for i in order[e]:
            for c in range(n_classes):
                margin = b[c]
                for j in range(d):
                    margin += W[c, j] * X[i, j]
                active = Y[i, c] * margin < 1.0
                for j in range(d):
                    g = alpha * W[c, j]
                    if active:
                        g -= Y[i, c] * X[i, j]
                    W[c, j] -= lr * g
                if active:
                    b[c] += lr * Y[i, c]


class LinearSVM(ClassifierMixin, BaseEstimator):
    """One-vs-rest linear SVM: hinge loss plus L2, plain SGD over shuffled samples."""

    def __init__(self, learning_rate: float = 0.01, epochs: int = 100, alpha: float = 1e-4, random_state: int = 0):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.alpha = alpha
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_, codes = _encode(y)
        n_classes = self.classes_.shape[0]
        Y = -np.ones((X.shape[0], n_classes))
        Y[np.arange(X.shape[0]), codes] = 1.0
        rng = np.random.default_rng(self.random_state)
        order = np.stack([rng.permutation(X.shape[0]) for _ in range(self.epochs)]) if self.epochs else np.zeros((0, X.shape[0]), dtype=np.int64)
        self.coef_ = np.zeros((n_classes, X.shape[1]))
        self.intercept_ = np.zeros(n_classes)
        _ovr_hinge_sgd(X, Y, order.astype(np.int64), float(self.learning_rate), float(self.alpha), self.coef_, self.intercept_)
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_.T + self.intercept_

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]


# -- regression ---------------------------------------------------------------


class RidgeRegression(RegressorMixin, BaseEstimator):
    """Closed-form least squares with a tiny ridge term; the intercept is not penalised."""

    def __init__(self, alpha: float = 1e-6):
        self.alpha = alpha

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        A = np.hstack([X, np.ones((X.shape[0], 1))])
        penalty = np.full(A.shape[1], self.alpha)
        penalty[-1] = 0.0
        gram = A.T @ A + np.diag(penalty)
        try:
            w = np.linalg.solve(gram, A.T @ y)
        except np.linalg.LinAlgError:
            w = np.linalg.lstsq(gram, A.T @ y, rcond=None)[0]
        self.coef_, self.intercept_ = w[:-1], float(w[-1])
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return check_array(X, dtype=np.float64) @ self.coef_ + self.intercept_


class KNNRegressor(RegressorMixin, BaseEstimator):
    def __init__(self, k: int = 5):
        self.k = k

    def fit(self, X, y):
        self.X_, self.y_ = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X, dtype=np.float64)
        idx = _neighbors(self.X_, X, min(self.k, self.X_.shape[0]))
        return self.y_[idx].mean(axis=1)


def _best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """First best (feature, threshold) by SSE reduction; features and thresholds scanned in ascending order."""
    n = y.shape[0]
    total_sse = float(((y - y.mean()) ** 2).sum())
    best_gain, best = 1e-12 * max(1.0, total_sse), None
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        left_n = np.arange(1, n)
        valid = (xs[1:] > xs[:-1]) & (left_n >= min_leaf) & (n - left_n >= min_leaf)
        if not valid.any():
            continue
        ls, lq = csum[:-1], csq[:-1]
        rs, rq = csum[-1] - ls, csq[-1] - lq
        sse = (lq - ls * ls / left_n) + (rq - rs * rs / (n - left_n))
        gain = np.where(valid, total_sse - sse, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best_gain:
            best_gain, best = gain[i], (j, 0.5 * (xs[i] + xs[i + 1]))
    return best


class DecisionTreeRegressor(RegressorMixin, BaseEstimator):
    """CART with variance-reduction splits at midpoints between distinct values."""

    def __init__(self, max_depth: int | None = None, min_samples_leaf: int = 1):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        # nodes: feature, threshold, left, right, value
        self.feature_, self.threshold_, self.left_, self.right_, self.value_ = [], [], [], [], []
        stack = [(np.arange(X.shape[0]), 0, self._new_node())]
        while stack:
            rows, depth, node = stack.pop()
            self.value_[node] = float(y[rows].mean())
            if self.max_depth is not None and depth >= self.max_depth:
                continue
            split = _best_split(X[rows], y[rows], self.min_samples_leaf)
            if split is None:
                continue
            j, thr = split
            go_left = X[rows, j] <= thr
            left, right = self._new_node(), self._new_node()
            self.feature_[node], self.threshold_[node] = j, thr
            self.left_[node], self.right_[node] = left, right
            stack.append((rows[~go_left], depth + 1, right))
            stack.append((rows[go_left], depth + 1, left))
        self.n_nodes_ = len(self.value_)
        return self

    def _new_node(self) -> int:
        self.feature_.append(-1)
        self.threshold_.append(0.0)
        self.left_.append(-1)
        self.right_.append(-1)
        self.value_.append(0.0)
        return len(self.value_) - 1

    def predict(self, X):
        check_is_fitted(self, "n_nodes_")
        X = check_array(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        for i, x in enumerate(X):
            node = 0
            while self.feature_[node] >= 0:
                node = self.left_[node] if x[self.feature_[node]] <= self.threshold_[node] else self.right_[node]
            out[i] = self.value_[node]
        return out


# -- clustering -----------------------------------------------------------------


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise TaskError("number of clusters must be at least 1")
    if k > n:
        raise TaskError(f"cannot form {k} clusters from {n} points")


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd's algorithm from a seeded k-means++ start.

    Stops when no centroid moves more than ``tol`` or after ``max_iter``
    iterations. An emptied cluster keeps its previous centroid.
    """

    def __init__(self, n_clusters: int = 8, max_iter: int = 300, tol: float = 1e-6, random_state: int = 0):
        self.n_clusters = n_clusters
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def _init(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = X.shape[0]
        centers = [X[rng.integers(n)]]
        closest = ((X - centers[0]) ** 2).sum(axis=1)
        for _ in range(1, self.n_clusters):
            total = closest.sum()
            if total <= 0:
                # all remaining points coincide with a centre
                idx = int(rng.integers(n))
            else:
                idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
                idx = min(idx, n - 1)
            centers.append(X[idx])
            closest = np.minimum(closest, ((X - X[idx]) ** 2).sum(axis=1))
        return np.array(centers)

    @staticmethod
    def _assign(X, centers):
        d2 = ((X[:, None, :] - centers[None]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        return labels, float(d2[np.arange(X.shape[0]), labels].sum())

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        _check_k(self.n_clusters, X.shape[0])
        rng = np.random.default_rng(self.random_state)
        centers = self._init(X, rng)
        labels, inertia = self._assign(X, centers)
        self.inertia_history_ = [inertia]
        self.n_iter_ = 0
        for it in range(self.max_iter):
            new = centers.copy()
            for c in range(self.n_clusters):
                members = X[labels == c]
                if members.shape[0]:
                    new[c] = members.mean(axis=0)
            shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
            centers = new
            labels, inertia = self._assign(X, centers)
            self.inertia_history_.append(inertia)
            self.n_iter_ = it + 1
            if shift < self.tol:
                break
        self.cluster_centers_, self.labels_, self.inertia_ = centers, labels, inertia
        return self


class DBSCAN(ClusterMixin, BaseEstimator):
    """Density clustering on cosine distance; noise gets label -1.

    A point is core when at least ``min_samples`` points (itself included)
    lie within ``eps``. Clusters are numbered in order of their first core
    point; a border point joins the first cluster that reaches it.
    """

    def __init__(self, eps: float = 0.5, min_samples: int = 5):
        self.eps = eps
        self.min_samples = min_samples

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n = X.shape[0]
        within = cosine_distances(X, X) <= self.eps
        core = within.sum(axis=1) >= self.min_samples
        labels = np.full(n, -1, dtype=np.int64)
        cluster = 0
        for start in range(n):
            if labels[start] != -1 or not core[start]:
                continue
            labels[start] = cluster
            frontier = [start]
            while frontier:
                p = frontier.pop()
                if not core[p]:
                    continue
                for q in np.flatnonzero(within[p] & (labels == -1)):
                    labels[q] = cluster
                    frontier.append(q)
            cluster += 1
        self.labels_ = labels
        self.core_sample_mask_ = core
        return self


@numba.njit(cache=True)
def _nn_chain_average(dist):
    """Average-linkage merges via the nearest-neighbour chain; ``dist`` is overwritten."""
    n = dist.shape[0]
    size = np.ones(n)
    active = np.ones(n, dtype=np.bool_)
    merges = np.empty((n - 1, 3))
    chain = np.empty(n, dtype=np.int64)
    top = 0
    for m in range(n - 1):
        if top == 0:
            for i in range(n):
                if active[i]:
                    chain[0] = i
                    top = 1
                    break
        while True:
            a = chain[top - 1]
            prev = chain[top - 2] if top >= 2 else -1
            best = -1
            best_d = np.inf
            # prefer the previous chain element on ties so the chain terminates
            if prev >= 0:
                best, best_d = prev, dist[a, prev]
            for j in range(n):
                if active[j] and j != a and dist[a, j] < best_d:
                    best, best_d = j, dist[a, j]
            if best == prev:
                break
            chain[top] = best
            top += 1
        a, b = chain[top - 1], chain[top - 2]
        top -= 2
        lo, hi = min(a, b), max(a, b)
        merges[m, 0], merges[m, 1], merges[m, 2] = lo, hi, dist[a, b]
        for j in range(n):
            if active[j] and j != lo and j != hi:
                d = (size[lo] * dist[lo, j] + size[hi] * dist[hi, j]) / (size[lo] + size[hi])
                dist[lo, j] = d
                dist[j, lo] = d
        size[lo] += size[hi]
        active[hi] = False
    return merges


class AgglomerativeClustering(ClusterMixin, BaseEstimator):
    """Average linkage on cosine distance, dendrogram cut at ``n_clusters``."""

    def __init__(self, n_clusters: int = 2):
        self.n_clusters = n_clusters

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        n = X.shape[0]
        _check_k(self.n_clusters, n)
        dist = np.maximum(cosine_distances(X, X), 0.0)
        np.fill_diagonal(dist, 0.0)
        merges = _nn_chain_average(dist) if n > 1 else np.zeros((0, 3))
        merges = merges[np.argsort(merges[:, 2], kind="stable")]
        parent = np.arange(n)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for lo, hi, _ in merges[: n - self.n_clusters]:
            ra, rb = find(int(lo)), find(int(hi))
            parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(n)])
        _, self.labels_ = np.unique(roots, return_inverse=True)
        self.merges_ = merges
        return self
