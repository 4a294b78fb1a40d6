"""Consistency of success rates between a generous and a tight step budget.

The same GoThrough episodes are run with a per-sub-task budget of 100
steps and again with 40, scoring success within 3 m. CSR compares the two success rates: 100% means
the policy did equally well under both budgets, lower values mean the
tight budget hurt. The greedy landmark-scanning baseline is shown next to
the oracle for contrast.

    python3 demos/consistency.py
"""
from subtasknav import fixtures
from subtasknav.episodes import ActionKind, generate_dataset
from subtasknav.metrics import csr, evaluate
from subtasknav.navigation import ExecutorConfig, GreedyBaseline, OracleNavigator

scene = fixtures.generate_fixture("four-room-ring")
episodes = generate_dataset(scene, ActionKind.GO_THROUGH, 100, seed=3)
scenes = {scene.id: scene}

policies = {
    "oracle": lambda ep: OracleNavigator(),
    "greedy": lambda ep: GreedyBaseline(seed=ep.seed),
}
for name, make in policies.items():
    rates = []
    for budget in (100, 40):
        res = evaluate(episodes, scenes, make, ExecutorConfig(budget, 500, 3.0))
        rates.append(res.sr)
        print(f"{name:7s} m_s={budget:3d}  SR {res.sr:5.1f}%  SPL {res.spl:5.1f}%")
    print(f"{name:7s} CSR {csr(*rates):5.1f}%\n")
