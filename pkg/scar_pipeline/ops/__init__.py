# Dagster ops
