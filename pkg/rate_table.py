import pandas as pd

RECORD_COLUMNS = ["n", "criterion", "replication", "k", "true", "full", "overfit", "underfit", "infeasible"]


def get_selection_rates(df: pd.DataFrame) -> pd.DataFrame:
    """1 行 = (n, 規準, 反復) の選択結果 → (n, 規準) ごとの選択率"""
    grouped = df.groupby(["n", "criterion"], sort=False).agg({
        "true": "mean",
        "full": "mean",
        "overfit": "mean",
        "underfit": "mean",
        "infeasible": "mean",
        "k": "mean",
        "replication": "count",
    }).reset_index()

    rename_map = {
        "true": "true_rate",
        "full": "full_rate",
        "overfit": "overfit_rate",
        "underfit": "underfit_rate",
        "infeasible": "infeasible_rate",
        "k": "mean_k",
        "replication": "replications",
    }
    return grouped.rename(columns=rename_map)


def rates_to_records(rates: pd.DataFrame) -> list[dict]:
    records = []
    for row in rates.to_dict(orient="records"):
        out = {}
        for key, v in row.items():
            if key == "criterion":
                out[key] = v
            elif key in ("n", "replications"):
                out[key] = int(v)
            else:
                # 全反復で選択なしなら mean_k は NaN
                out[key] = None if pd.isna(v) else float(v)
        records.append(out)
    return records
