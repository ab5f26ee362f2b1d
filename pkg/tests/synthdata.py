"""Deterministic Swissmetro-schema fixture generator.

Simulates survey rows whose choices come from a known utility model with
category-level effects, so encoders have real structure to learn. Numbers
are plausible but arbitrary; tests assert structure, not survey values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

HEADER = (
    "GROUP\tSURVEY\tSP\tID\tPURPOSE\tFIRST\tTICKET\tWHO\tLUGGAGE\tAGE\tMALE\t"
    "INCOME\tGA\tORIGIN\tDEST\tTRAIN_AV\tCAR_AV\tSM_AV\tTRAIN_TT\tTRAIN_CO\t"
    "TRAIN_HE\tSM_TT\tSM_CO\tSM_HE\tSM_SEATS\tCAR_TT\tCAR_CO\tCHOICE"
)

CANTONS = (1, 2, 17, 22, 25, 26)


def write_synthetic_swissmetro(path: str | Path, n_rows: int = 1800, seed: int = 123) -> Path:
    rng = np.random.default_rng(seed)
    path = Path(path)

    orig = rng.choice(CANTONS, size=n_rows)
    dest = np.empty(n_rows, dtype=np.int64)
    for i in range(n_rows):
        choices = [c for c in CANTONS if c != orig[i]]
        dest[i] = choices[rng.integers(len(choices))]
    ticket = rng.integers(0, 9, size=n_rows)
    who = rng.integers(0, 4, size=n_rows)
    age = np.where(rng.random(n_rows) < 0.02, 6, rng.integers(1, 6, size=n_rows))
    income = rng.integers(0, 5, size=n_rows)
    purpose = np.where(rng.random(n_rows) < 0.01, 0, rng.integers(1, 10, size=n_rows))
    ga = (rng.random(n_rows) < 0.1).astype(int)
    first = rng.integers(0, 2, size=n_rows)
    luggage = rng.choice([0, 1, 3], size=n_rows, p=[0.55, 0.35, 0.10])
    male = rng.integers(0, 2, size=n_rows)
    survey = (rng.random(n_rows) < 0.4).astype(int)
    seats = rng.integers(0, 2, size=n_rows)

    train_tt = rng.uniform(60, 240, size=n_rows)
    sm_tt = train_tt * rng.uniform(0.45, 0.7, size=n_rows)
    car_tt = rng.uniform(50, 260, size=n_rows)
    train_co = rng.uniform(20, 120, size=n_rows)
    sm_co = train_co * rng.uniform(1.0, 1.6, size=n_rows)
    car_co = rng.uniform(30, 160, size=n_rows)
    train_he = rng.choice([30, 60, 120], size=n_rows)
    sm_he = rng.choice([10, 20, 30], size=n_rows)
    car_av = (rng.random(n_rows) < 0.78).astype(int)

    # category-level utility effects the encoders should recover
    od_labels = sorted({f"{o}_{d}" for o in CANTONS for d in CANTONS if o != d})
    od_eff = {lab: rng.normal(0.0, 0.5, size=2) for lab in od_labels}
    ticket_eff = rng.normal(0.0, 0.8, size=9)
    who_eff = rng.normal(0.0, 0.4, size=(4, 2))
    age_eff = rng.normal(0.0, 0.4, size=(7, 2))
    income_eff = rng.normal(0.0, 0.4, size=(5, 2))

    ga_off = (ga == 0).astype(float)
    v_train = (
        -0.57
        - 0.68 * train_tt / 60.0
        - 1.63 * train_co * ga_off / 100.0
        - 0.33 * train_he / 60.0
        + 3.05 * (survey == 0)
        + ticket_eff[ticket]
        + who_eff[who, 0]
        + age_eff[age, 0]
        + income_eff[income, 0]
        + np.array([od_eff[f"{o}_{d}"][0] for o, d in zip(orig, dest)])
    )
    v_sm = (
        -0.35
        - 0.68 * sm_tt / 60.0
        - 0.78 * sm_co * ga_off / 100.0
        - 0.51 * sm_he / 60.0
        - 0.58 * seats
        + 3.05 * (survey == 0)
        + 0.04 * (first == 0)
        + who_eff[who, 1]
        + age_eff[age, 1]
        + income_eff[income, 1]
        + np.array([od_eff[f"{o}_{d}"][1] for o, d in zip(orig, dest)])
    )
    v_car = (
        -0.72 * car_tt / 60.0
        - 1.08 * car_co / 100.0
        + 0.39 * (luggage == 1)
        + 2.06 * (luggage > 1)
    )

    logits = np.column_stack([v_train, v_sm, v_car])
    avail = np.column_stack([np.ones(n_rows, bool), np.ones(n_rows, bool), car_av.astype(bool)])
    masked = np.where(avail, logits, -np.inf)
    masked = masked - masked.max(axis=1, keepdims=True)
    probs = np.exp(masked)
    probs /= probs.sum(axis=1, keepdims=True)
    u = rng.random(n_rows)
    choice = 1 + (u[:, None] > np.cumsum(probs, axis=1)).sum(axis=1)
    choice[rng.random(n_rows) < 0.005] = 0  # a few unusable responses

    resp_id = np.arange(n_rows) // 3 + 1
    lines = [HEADER]
    for i in range(n_rows):
        lines.append(
            "\t".join(
                str(int(v))
                for v in (
                    2, survey[i], 1, resp_id[i], purpose[i], first[i], ticket[i],
                    who[i], luggage[i], age[i], male[i], income[i], ga[i],
                    orig[i], dest[i], 1, car_av[i], 1,
                    round(train_tt[i]), round(train_co[i]), train_he[i],
                    round(sm_tt[i]), round(sm_co[i]), sm_he[i], seats[i],
                    round(car_tt[i]), round(car_co[i]), choice[i],
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")
    return path
