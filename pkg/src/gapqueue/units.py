"""Conversions between the internal per-second rates and veh/h."""

SECONDS_PER_HOUR = 3600.0


def per_second(veh_per_hour):
    return veh_per_hour / SECONDS_PER_HOUR


def per_hour(veh_per_second):
    return veh_per_second * SECONDS_PER_HOUR
