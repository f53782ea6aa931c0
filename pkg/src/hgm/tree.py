"""Archive of agents: a rooted tree with per-node and clade-level counters."""

from dataclasses import dataclass, field

from hgm.exceptions import ParameterError, UsageError
from hgm.validation import check_positive_int


@dataclass
class AgentNode:
    id: int
    parent: int | None
    task_count: int
    children: list = field(default_factory=list)
    n_success: int = 0
    n_failure: int = 0
    clade_success: int = 0
    clade_failure: int = 0
    pending_expansions: int = 0
    remaining_tasks: set = field(default_factory=set)
    pending_tasks: set = field(default_factory=set)

    @property
    def pending_evals(self):
        return len(self.pending_tasks)

    @property
    def n_evaluated(self):
        return self.n_success + self.n_failure

    @property
    def clade_evaluated(self):
        return self.clade_success + self.clade_failure

    @property
    def fully_evaluated(self):
        return self.n_evaluated == self.task_count

    def empirical_mean(self):
        """Own success rate, or ``None`` before the first evaluation."""
        n = self.n_evaluated
        return self.n_success / n if n else None


class SearchTree:
    """Tree of agents sharing one fixed task list.

    Clade counters are updated along the ancestor path on every recorded
    evaluation, so reading them is O(1). Each (agent, task) pair can be
    evaluated at most once; a task may be reserved first with
    :meth:`start_evaluation` while its outcome is outstanding.
    """

    def __init__(self, task_count):
        self.task_count = check_positive_int(task_count, "task_count")
        self.nodes = {}
        self.root = 0
        self.n_evaluations = 0
        self._new_node(None)

    def __len__(self):
        return len(self.nodes)

    def __contains__(self, agent):
        return agent in self.nodes

    def __getitem__(self, agent):
        try:
            return self.nodes[agent]
        except KeyError:
            raise UsageError(f"unknown agent {agent!r}") from None

    def _new_node(self, parent):
        node_id = len(self.nodes)
        node = AgentNode(
            id=node_id,
            parent=parent,
            task_count=self.task_count,
            remaining_tasks=set(range(self.task_count)),
        )
        self.nodes[node_id] = node
        return node

    def add_child(self, parent):
        parent_node = self[parent]
        child = self._new_node(parent_node.id)
        parent_node.children.append(child.id)
        return child.id

    def start_expansion(self, parent):
        self[parent].pending_expansions += 1

    def end_expansion(self, parent):
        node = self[parent]
        if node.pending_expansions == 0:
            raise UsageError(f"agent {parent} has no expansion in flight")
        node.pending_expansions -= 1

    @property
    def pending_expansions(self):
        return sum(n.pending_expansions for n in self.nodes.values())

    @property
    def pending_evals(self):
        return sum(len(n.pending_tasks) for n in self.nodes.values())

    def ancestors(self, agent):
        """Yield ``agent`` and then each ancestor up to the root."""
        node = self[agent]
        while node is not None:
            yield node.id
            node = self.nodes[node.parent] if node.parent is not None else None

    def start_evaluation(self, agent, task):
        """Reserve ``task`` on ``agent`` for an evaluation whose outcome is pending."""
        node = self[agent]
        if task not in node.remaining_tasks:
            raise UsageError(f"task {task} is not available on agent {agent}")
        node.remaining_tasks.remove(task)
        node.pending_tasks.add(task)

    def cancel_evaluation(self, agent, task):
        """Return a reserved task to the pool without recording an outcome."""
        node = self[agent]
        if task not in node.pending_tasks:
            raise UsageError(f"task {task} is not pending on agent {agent}")
        node.pending_tasks.remove(task)
        node.remaining_tasks.add(task)

    def record_evaluation(self, agent, task, success):
        node = self[agent]
        if task in node.pending_tasks:
            node.pending_tasks.remove(task)
        elif task in node.remaining_tasks:
            node.remaining_tasks.remove(task)
        elif 0 <= task < self.task_count:
            raise UsageError(f"agent {agent} was already evaluated on task {task}")
        else:
            raise ParameterError(f"task {task} outside [0, {self.task_count})")
        if success:
            node.n_success += 1
        else:
            node.n_failure += 1
        for a in self.ancestors(agent):
            if success:
                self.nodes[a].clade_success += 1
            else:
                self.nodes[a].clade_failure += 1
        self.n_evaluations += 1

    def clade_members(self, agent):
        """Node ids of the subtree rooted at ``agent`` (the agent included)."""
        out = []
        stack = [self[agent].id]
        while stack:
            a = stack.pop()
            out.append(a)
            stack.extend(self.nodes[a].children)
        return set(out)

    def cmp_estimate(self, agent):
        """Clade success rate, or ``None`` when the clade has no evaluations."""
        node = self[agent]
        n = node.clade_evaluated
        return node.clade_success / n if n else None

    def depth(self, agent):
        return sum(1 for _ in self.ancestors(agent)) - 1

    def snapshot(self):
        """Plain-data view of the counters, suitable for JSON."""
        return {
            "task_count": self.task_count,
            "nodes": [
                {
                    "id": n.id,
                    "parent": n.parent,
                    "n_success": n.n_success,
                    "n_failure": n.n_failure,
                    "clade_success": n.clade_success,
                    "clade_failure": n.clade_failure,
                    "pending_tasks": sorted(n.pending_tasks),
                    "pending_expansions": n.pending_expansions,
                    "remaining_tasks": sorted(n.remaining_tasks),
                }
                for n in self.nodes.values()
            ],
        }

    @classmethod
    def from_snapshot(cls, data):
        tree = cls(data["task_count"])
        for rec in data["nodes"][1:]:
            tree.add_child(rec["parent"])
        for rec in data["nodes"]:
            node = tree.nodes[rec["id"]]
            node.n_success = rec["n_success"]
            node.n_failure = rec["n_failure"]
            node.clade_success = rec["clade_success"]
            node.clade_failure = rec["clade_failure"]
            node.pending_tasks = set(rec["pending_tasks"])
            node.remaining_tasks = set(rec["remaining_tasks"])
            node.pending_expansions = rec.get("pending_expansions", 0)
            tree.n_evaluations += node.n_evaluated
        return tree


def new_tree(task_count):
    return SearchTree(task_count)


def add_child(tree, parent):
    return tree.add_child(parent)


def record_evaluation(tree, agent, task, success):
    tree.record_evaluation(agent, task, success)


def cmp_estimate(tree, agent):
    return tree.cmp_estimate(agent)


def clade_members(tree, agent):
    return tree.clade_members(agent)
