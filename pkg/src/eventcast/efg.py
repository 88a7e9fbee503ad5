"""Extensive-form games as online combinatorial optimization.

Deterministic strategies are represented by the set of terminal nodes they
make reachable; opponents and chance collapse into a payoff-weighted
reachability vector, so expected utility is an inner product. A backward
induction over information-set groups implements the best-response oracle
(valid when the learner has both perfect recall and path recall), and
conditioning on "information set reachable and action played there" events
yields regret bounds against informed causal deviations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Event, EventCollection

CHANCE = -1


class RecallError(ValueError):
    """Best-response oracle invoked on a game lacking the required recall."""


@dataclass
class Node:
    node_id: str
    owner: object            # player index (0-based), CHANCE, or None (terminal)
    parent: object
    action: object
    infoset: object = None
    prob: object = None      # edge-from-parent probability under a chance parent
    payoffs: object = None
    children: dict = field(default_factory=dict)   # action -> node id, ordered

    @property
    def is_terminal(self):
        return self.owner is None


class GameTree:
    """Validated game tree with information sets and chance probabilities."""

    def __init__(self, n_players, nodes, root):
        self.n_players = n_players
        self.nodes = nodes
        self.root = root
        self.leaves = [nid for nid, n in nodes.items() if n.is_terminal]
        self.leaf_index = {z: i for i, z in enumerate(self.leaves)}
        self.infosets = {}
        self.infoset_owner = {}
        for nid, n in nodes.items():
            if n.infoset is not None:
                self.infosets.setdefault(n.infoset, []).append(nid)
                self.infoset_owner[n.infoset] = n.owner
        self.infoset_actions = {
            name: list(nodes[members[0]].children)
            for name, members in self.infosets.items()
        }
        self._validate()
        self._recall_cache = {}
        self._mask_cache = {}

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_text(cls, text):
        """Line-oriented format:

        game <n_players>
        node <id> <owner> <parent|-> <action|-> [infoset=..] [prob=..]
             [payoffs=v1,v2,..]

        owner is ``p<k>`` (1-based in the file), ``chance``, or ``terminal``.
        Nodes whose parent is a chance node must carry ``prob``.
        """
        n_players = None
        nodes = {}
        root = None
        for raw in text.splitlines():
            line = raw.split("#")[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "game":
                n_players = int(parts[1])
                continue
            if parts[0] != "node":
                raise ValueError(f"unknown directive: {parts[0]!r}")
            if n_players is None:
                raise ValueError("'game <n_players>' must come first")
            if len(parts) < 5:
                raise ValueError(f"bad node line: {line!r}")
            nid, owner_s, parent, action = parts[1:5]
            if nid in nodes:
                raise ValueError(f"duplicate node id {nid!r}")
            kv = {}
            for item in parts[5:]:
                k, _, v = item.partition("=")
                kv[k] = v
            if owner_s == "chance":
                owner = CHANCE
            elif owner_s == "terminal":
                owner = None
            elif owner_s.startswith("p"):
                owner = int(owner_s[1:]) - 1
                if not 0 <= owner < n_players:
                    raise ValueError(f"player out of range in {line!r}")
            else:
                raise ValueError(f"bad owner {owner_s!r}")
            payoffs = None
            if "payoffs" in kv:
                payoffs = np.array([float(v) for v in kv["payoffs"].split(",")])
            infoset = kv.get("infoset")
            if owner is not None and owner != CHANCE and infoset is None:
                infoset = f"_{nid}"
            node = Node(nid, owner,
                        None if parent == "-" else parent,
                        None if action == "-" else action,
                        infoset=infoset,
                        prob=float(kv["prob"]) if "prob" in kv else None,
                        payoffs=payoffs)
            nodes[nid] = node
            if node.parent is None:
                if root is not None:
                    raise ValueError("multiple roots")
                root = nid
            else:
                if node.parent not in nodes:
                    raise ValueError(f"parent {node.parent!r} of {nid!r} must "
                                     "be declared first")
                parent_node = nodes[node.parent]
                if node.action in parent_node.children:
                    raise ValueError(f"duplicate action {node.action!r} at "
                                     f"{node.parent!r}")
                parent_node.children[node.action] = nid
        if root is None:
            raise ValueError("no root node")
        return cls(n_players, nodes, root)

    # -- validation -------------------------------------------------------------

    def _validate(self):
        for nid, n in self.nodes.items():
            if n.is_terminal:
                if n.children:
                    raise ValueError(f"terminal node {nid} has children")
                if n.payoffs is None or len(n.payoffs) != self.n_players:
                    raise ValueError(f"terminal node {nid} needs payoffs for "
                                     f"all {self.n_players} players")
                if not np.all(np.isfinite(n.payoffs)):
                    raise ValueError(f"non-finite payoff at {nid}")
            else:
                if not n.children:
                    raise ValueError(f"internal node {nid} has no children")
            if n.parent is not None and \
                    self.nodes[n.parent].owner == CHANCE:
                if n.prob is None or n.prob < 0:
                    raise ValueError(f"chance edge into {nid} needs prob")
        for nid, n in self.nodes.items():
            if n.owner == CHANCE:
                total = sum(self.nodes[c].prob for c in n.children.values())
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"chance probs at {nid} sum to {total}")
        for name, members in self.infosets.items():
            owners = {self.nodes[m].owner for m in members}
            if len(owners) != 1:
                raise ValueError(f"information set {name} mixes owners")
            sigs = {tuple(self.nodes[m].children) for m in members}
            if len(sigs) != 1:
                raise ValueError(f"information set {name} mixes action sets")

    # -- paths -------------------------------------------------------------------

    def path(self, nid):
        """Nodes from the root to nid, excluding nid."""
        out = []
        cur = self.nodes[nid]
        while cur.parent is not None:
            out.append(cur.parent)
            cur = self.nodes[cur.parent]
        return out[::-1]

    def path_edges(self, nid):
        """(node, action) pairs from the root to nid."""
        out = []
        cur = self.nodes[nid]
        while cur.parent is not None:
            out.append((cur.parent, cur.action))
            cur = self.nodes[cur.parent]
        return out[::-1]

    def own_history(self, nid, player):
        """(infoset, action) pairs at the player's own nodes on the path."""
        return [(self.nodes[h].infoset, a) for h, a in self.path_edges(nid)
                if self.nodes[h].owner == player]

    def player_infosets(self, player):
        return [name for name, owner in self.infoset_owner.items()
                if owner == player]


# ---------------------------------------------------------------------------
# recall validation
# ---------------------------------------------------------------------------

@dataclass
class RecallReport:
    perfect_recall: bool
    path_recall: bool
    witnesses: dict


def validate_recall(game, player):
    """Exhaustive pairwise check of perfect recall and path recall for one
    player; returns witness pairs on failure."""
    key = ("recall", player)
    if key in game._recall_cache:
        return game._recall_cache[key]
    perfect, path = True, True
    witnesses = {}
    for name in game.player_infosets(player):
        members = game.infosets[name]
        histories = {m: game.own_history(m, player) for m in members}
        nonown = {m: {h for h in game.path(m)
                      if game.nodes[h].owner != player} for m in members}
        for x in members:
            for y in members:
                if x == y:
                    continue
                hist_y = histories[y]
                infosets_y = {i for i, _ in hist_y}
                for (iset, act) in histories[x]:
                    if (iset, act) not in hist_y:
                        perfect = False
                        witnesses.setdefault("perfect", (name, x, y, iset, act))
                    if iset not in infosets_y:
                        path = False
                        witnesses.setdefault("path_own", (name, x, y, iset))
                if nonown[x] != nonown[y]:
                    path = False
                    diff = sorted(nonown[x] ^ nonown[y])[0]
                    witnesses.setdefault("path_nonown", (name, x, y, diff))
    report = RecallReport(perfect, path, witnesses)
    game._recall_cache[key] = report
    return report


# ---------------------------------------------------------------------------
# strategies and reachability
# ---------------------------------------------------------------------------

def reachability_vector(game, player, opponent_strategies):
    """v_z: product of non-learner edge probabilities on the path to z times
    the learner's payoff there.

    opponent_strategies: {infoset name: {action: prob}} for every non-learner
    personal information set; chance probabilities come from the tree.
    """
    for name, dist in opponent_strategies.items():
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-9 or min(dist.values()) < -1e-12:
            raise ValueError(f"strategy at {name} is not a distribution")
    v = np.zeros(len(game.leaves))
    for z in game.leaves:
        r = 1.0
        for h, a in game.path_edges(z):
            node = game.nodes[h]
            if node.owner == player:
                continue
            if node.owner == CHANCE:
                r *= game.nodes[node.children[a]].prob
            else:
                r *= opponent_strategies[node.infoset][a]
        v[game.leaf_index[z]] = r * game.nodes[z].payoffs[player]
    return v


def leaf_form_from_behavioral(game, player, strategy):
    """Indicator over terminal nodes reachable under a deterministic
    behavioral strategy {infoset: action}."""
    pi = np.zeros(len(game.leaves))
    for z in game.leaves:
        ok = True
        for h, a in game.path_edges(z):
            node = game.nodes[h]
            if node.owner == player and strategy[node.infoset] != a:
                ok = False
                break
        pi[game.leaf_index[z]] = 1.0 if ok else 0.0
    return pi


def validate_leaf_form(game, player, pi):
    """True iff pi is the reachable-leaf set of some deterministic behavioral
    strategy (reconstructed and compared exactly)."""
    pi = np.asarray(pi, dtype=float)
    forced = {}
    for z in game.leaves:
        if pi[game.leaf_index[z]] != 1.0:
            continue
        for h, a in game.path_edges(z):
            node = game.nodes[h]
            if node.owner != player:
                continue
            if forced.setdefault(node.infoset, a) != a:
                return False
    strategy = {name: forced.get(name, game.infoset_actions[name][0])
                for name in game.player_infosets(player)}
    return np.array_equal(leaf_form_from_behavioral(game, player, strategy), pi)


def enumerate_deterministic_strategies(game, player):
    names = game.player_infosets(player)
    if not names:
        return [{}]
    out = [{}]
    for name in names:
        out = [dict(s, **{name: a}) for s in out
               for a in game.infoset_actions[name]]
    return out


def expected_utility_traversal(game, player, strategy, opponent_strategies):
    """Expected payoff by direct tree walk (independent check of the
    inner-product representation)."""

    def walk(nid, prob):
        node = game.nodes[nid]
        if node.is_terminal:
            return prob * node.payoffs[player]
        if node.owner == CHANCE:
            return sum(walk(c, prob * game.nodes[c].prob)
                       for c in node.children.values())
        if node.owner == player:
            return walk(node.children[strategy[node.infoset]], prob)
        dist = opponent_strategies[node.infoset]
        return sum(walk(c, prob * dist[a])
                   for a, c in node.children.items())

    return walk(game.root, 1.0)


# ---------------------------------------------------------------------------
# best-response oracle (backward induction over information-set groups)
# ---------------------------------------------------------------------------

def _child_groups(game, player, child_ids):
    """Partition a child set into learner information sets and single
    non-learner nodes; learner infosets must lie fully inside the set."""
    child_set = set(child_ids)
    groups, seen = [], set()
    for cid in child_ids:
        node = game.nodes[cid]
        if not node.is_terminal and node.owner == player:
            name = node.infoset
            if name in seen:
                continue
            members = game.infosets[name]
            if not set(members) <= child_set:
                raise RecallError(f"dangling information set {name}: extends "
                                  "beyond a single child group")
            groups.append(("infoset", name))
            seen.add(name)
        else:
            groups.append(("node", cid))
    return groups


def best_response_leaf_form(game, player, v, root_group=None):
    """Optimal leaf-form strategy and its value <pi, v>.

    Requires the player to have both perfect recall and path recall; raises
    RecallError naming a witness otherwise. Backward induction: terminal
    nodes return themselves, learner information sets maximize summed child
    values over actions (ties to the first declared action), other nodes sum
    their children.
    """
    rep = validate_recall(game, player)
    if not (rep.perfect_recall and rep.path_recall):
        raise RecallError(f"player {player} lacks "
                          f"{'perfect' if not rep.perfect_recall else 'path'} "
                          f"recall; witness: {rep.witnesses}")
    v = np.asarray(v, dtype=float)

    def solve(group):
        kind, ref = group
        if kind == "node":
            node = game.nodes[ref]
            if node.is_terminal:
                idx = game.leaf_index[ref]
                return [idx], float(v[idx])
            leaves, total = [], 0.0
            for sub in _child_groups(game, player, node.children.values()):
                l, val = solve(sub)
                leaves += l
                total += val
            return leaves, total
        members = game.infosets[ref]
        best = None
        for a in game.infoset_actions[ref]:
            children = [game.nodes[m].children[a] for m in members]
            leaves, total = [], 0.0
            for sub in _child_groups(game, player, children):
                l, val = solve(sub)
                leaves += l
                total += val
            if best is None or total > best[1]:
                best = (leaves, total)
        return best

    if root_group is None:
        root_node = game.nodes[game.root]
        root_group = ("infoset", root_node.infoset) \
            if root_node.owner == player else ("node", game.root)
    leaves, value = solve(root_group)
    pi = np.zeros(len(game.leaves))
    pi[leaves] = 1.0
    return pi, value


def best_response_family(game, player):
    """The leaf-form strategy family as a combinatorial oracle."""
    from .combinatorial import FeasibleSetFamily

    def opt(v):
        pi, _ = best_response_leaf_form(game, player, v)
        return pi

    def enumerate_sets():
        return [leaf_form_from_behavioral(game, player, s)
                for s in enumerate_deterministic_strategies(game, player)]

    return FeasibleSetFamily(len(game.leaves), opt,
                             enumerate_sets=enumerate_sets)


# ---------------------------------------------------------------------------
# causal-deviation events and regret
# ---------------------------------------------------------------------------

def infoset_action_masks(game, player):
    """(infoset, action) -> boolean leaf mask: leaves lying below that
    information set through that action."""
    key = ("masks", player)
    if key in game._mask_cache:
        return game._mask_cache[key]
    masks = {}
    for name in game.player_infosets(player):
        for a in game.infoset_actions[name]:
            masks[(name, a)] = np.zeros(len(game.leaves), dtype=bool)
    for z in game.leaves:
        for h, a in game.path_edges(z):
            node = game.nodes[h]
            if node.owner == player:
                masks[(node.infoset, a)][game.leaf_index[z]] = True
    game._mask_cache[key] = masks
    return masks


class CausalTriggerEvent(Event):
    """Fires when the strategy the decision maker derives from the prediction
    makes the information set reachable and plays the action there."""

    def __init__(self, game, player, infoset, action, family):
        super().__init__(f"trigger[{infoset}|{action}]", binary=True)
        self.game = game
        self.player = player
        self.infoset = infoset
        self.action = action
        self.family = family
        self.mask = infoset_action_masks(game, player)[(infoset, action)]

    def __call__(self, prefix, x, p):
        pi = self.family.decision(p)
        return 1.0 if pi[self.mask].any() else 0.0


class _CausalEvaluator:
    """One best-response call per prediction, shared by all trigger events."""

    def __init__(self, family, mask_matrix):
        self.family = family
        self.mask_matrix = mask_matrix          # (n_events, |Z|)

    def __call__(self, prefix, x, p):
        pi = self.family.decision(p)
        return (self.mask_matrix @ pi > 0).astype(float)

    def bind_round(self, prefix, x):
        return lambda p: self(prefix, x, p)


def causal_events(game, player, family=None):
    """One binary event per (information set, action) of the player."""
    family = family or best_response_family(game, player)
    masks = infoset_action_masks(game, player)
    events = []
    rows = []
    for name in game.player_infosets(player):
        for a in game.infoset_actions[name]:
            events.append(CausalTriggerEvent(game, player, name, a, family))
            rows.append(masks[(name, a)].astype(float))
    return EventCollection(events, disjoint=False,
                           evaluator=_CausalEvaluator(family, np.array(rows)))


def causal_regret(game, player, strategies, outcomes):
    """Max over informed causal deviations of the average deviation gain.

    For each trigger (information set, action): best-respond on the triggered
    subsequence below the trigger via the backward-induction oracle on the
    accumulated reachability vector, against the realized below-trigger
    value. Never-fired triggers contribute zero.
    """
    strategies = np.asarray(strategies, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    t_rounds = strategies.shape[0]
    masks = infoset_action_masks(game, player)
    under = {}
    for (name, a), m in masks.items():
        under[name] = under.get(name, np.zeros_like(m)) | m
    best = None
    any_unfired = False
    for (name, a), m in masks.items():
        fired = (strategies[:, m].sum(axis=1) > 0)
        if not fired.any():
            any_unfired = True
            continue
        cum_v = outcomes[fired].sum(axis=0)
        _, dev_value = best_response_leaf_form(game, player, cum_v,
                                               root_group=("infoset", name))
        actual = float(np.einsum("tz,tz->", strategies[fired][:, under[name]],
                                 outcomes[fired][:, under[name]]))
        gain = dev_value - actual
        best = gain if best is None else max(best, gain)
    if any_unfired or best is None:
        best = max(best or 0.0, 0.0)
    return best / t_rounds


def strategy_to_json(game, pi):
    """Leaf-form strategy as JSON keyed by terminal node ids."""
    pi = np.asarray(pi)
    return {z: int(pi[game.leaf_index[z]]) for z in game.leaves}


def strategy_from_json(game, data):
    pi = np.zeros(len(game.leaves))
    for z, v in data.items():
        if z not in game.leaf_index:
            raise ValueError(f"unknown terminal node {z!r}")
        pi[game.leaf_index[z]] = float(v)
    return pi


def values_to_json(game, v):
    """Reachability/value vector as JSON keyed by terminal node ids."""
    v = np.asarray(v, dtype=float)
    return {z: float(v[game.leaf_index[z]]) for z in game.leaves}


def values_from_json(game, data):
    v = np.zeros(len(game.leaves))
    for z, val in data.items():
        if z not in game.leaf_index:
            raise ValueError(f"unknown terminal node {z!r}")
        v[game.leaf_index[z]] = float(val)
    return v


def efg_subsequence_regret(game, player, strategies, outcomes, event_values):
    """Per-event subsequence regret with the comparator maximized over all
    leaf-form strategies via the oracle."""
    strategies = np.asarray(strategies, dtype=float)
    outcomes = np.asarray(outcomes, dtype=float)
    ev = np.asarray(event_values, dtype=float)
    out = {}
    for e in range(ev.shape[1]):
        g = ev[:, e] @ outcomes
        _, dev = best_response_leaf_form(game, player, g)
        realized = float(np.einsum("t,tz,tz->", ev[:, e], strategies, outcomes))
        out[e] = dev - realized
    return out
