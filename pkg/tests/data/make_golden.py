"""Regenerate the golden Prometheus corpus (run once; outputs are committed).

Each emitted line is built together with its expected outcome, so the golden
record list does not depend on the parser under test.
"""

import json
import random
from pathlib import Path

HERE = Path(__file__).parent
MAPPED = [
    ("node_cpu_user", "node_cpu_user"),
    ("node_memory_MemFree", "node_memory_Memfree"),
    ("node_disk_io_now", "node_disk_io_time_weighted"),
    ("node_network_receive_bytes", "node_Vnetwork_receive_bytes"),
]
UNMAPPED = ["go_goroutines", "process_open_fds", "up"]
MALFORMED = [
    'node_cpu_user{host="a" 1.0 1000',  # unterminated label set
    "node_cpu_user{host=a} 1.0 1000",  # unquoted label value
    "node_cpu_user 1.0.0 1000",  # bad float
    "node_cpu_user NaN 1000",  # non-finite
    "node_cpu_user +Inf",
    "{host=\"a\"} 3 1000",  # missing name
    "node_cpu_user",  # missing value
    "9bad_name 1 1000",
]


def main():
    rng = random.Random(20240601)
    lines, records, malformed = [], [], []
    unmapped = {}
    comments = 0
    for lineno in range(1, 201):
        roll = rng.random()
        if roll < 0.08:
            lines.append(rng.choice(["# HELP node_cpu_user cpu time", "# TYPE node_cpu_user gauge", ""]))
            comments += 1
        elif roll < 0.18:
            lines.append(MALFORMED[len(malformed) % len(MALFORMED)])
            malformed.append(lineno)
        elif roll < 0.30:
            name = rng.choice(UNMAPPED)
            lines.append(f'{name}{{host="h{rng.randint(0, 2)}"}} {rng.randint(0, 99)} {1700000000000 + lineno}')
            unmapped[name] = unmapped.get(name, 0) + 1
        else:
            name, attr = rng.choice(MAPPED)
            host = f"h{rng.randint(0, 2)}"
            value = round(rng.uniform(-1e3, 1e3), rng.randint(0, 6))
            style = rng.randint(0, 3)
            if style == 0:
                lines.append(f'{name}{{host="{host}"}} {value!r}')
                ts = None
            elif style == 1:
                ts = 1700000000000 + 10 * lineno
                lines.append(f'{name}{{job="node",host="{host}"}} {value!r} {ts}')
            elif style == 2:
                ts = 1700000000000 + 10 * lineno
                lines.append(f'{name}{{instance="{host}"}} {value:e} {ts}')
                value = float(f"{value:e}")
            else:
                ts = 1700000000000 + 10 * lineno
                lines.append(f'{name}{{host="{host}",path="a\\"b"}}  {value!r}  {ts}')
            records.append({"timestamp": None if ts is None else ts / 1000.0, "host": host,
                            "attribute": attr, "value": float(value)})
    (HERE / "golden.prom").write_text("\n".join(lines) + "\n", encoding="utf-8")
    golden = {"records": records, "malformed_lines": malformed, "unmapped": unmapped,
              "comment_lines": comments, "total_lines": 200,
              "mapping": {n: a for n, a in MAPPED}}
    (HERE / "golden.json").write_text(json.dumps(golden, indent=1) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
