"""Random scripts mixing deterministic and physical-time frames, for property tests."""

import random

SAME = "https://app.example"
CROSS = "https://cdn.example"


def _spawn(rng, target):
    choice = rng.randrange(6)
    if choice == 0:
        return f"set_timeout({target}, {rng.randrange(0, 50_000)});"
    if choice == 1:
        return f'fetch("{SAME}", {rng.randrange(0, 2_000)}, {target});'
    if choice == 2:
        return f'fetch("{CROSS}", {rng.randrange(0, 2_000)}, {target});'
    if choice == 3:
        return f"request_frame({target});"
    if choice == 4:
        return f"secret_async({rng.randrange(1, 500)}, {target});"
    return f"secret_sync({rng.randrange(1, 500)}); {target}(0);"


def random_script(seed, events=40, callbacks=4, physical=True):
    """A script whose callbacks keep spawning frames until ``events`` deliveries ran.

    With ``physical=False`` only deterministic kinds are used.
    """
    rng = random.Random(seed)
    names = [f"cb{i}" for i in range(callbacks)]
    lines = ["let n = 0;"]

    def spawn():
        s = _spawn(rng, rng.choice(names))
        while not physical and ("request_frame" in s or SAME in s):
            s = _spawn(rng, rng.choice(names))
        return s

    for name in names:
        work = rng.randrange(0, 30)
        body = [
            "n = n + 1;",
            "output(now());",
            f"let i = 0; while (i < {work}) {{ i = i + 1; }}",
            f"if (n < {events}) {{ {' '.join(spawn() for _ in range(rng.randrange(1, 3)))} }}",
        ]
        # direct calls from secret_sync spawns would recurse without bound; guard them
        lines.append(f"function {name}(t) {{ if (n < {2 * events}) {{ {' '.join(body)} }} }}")
    lines.append("function on_input(v) { output(v); }")
    for _ in range(rng.randrange(1, 4)):
        lines.append(spawn())
    return "\n".join(lines)


def random_inputs(seed, count=3, horizon=5_000_000):
    rng = random.Random(seed ^ 0x5EED)
    return sorted((rng.randrange(horizon), rng.randrange(100)) for _ in range(count))
