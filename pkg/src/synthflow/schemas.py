"""Bundled column schemas for the two supported flow datasets.

The lists below are frozen so that runs are reproducible: category coding
and feature order never depend on the input file. Schemas can be overridden
with a JSON document (see ``dataio.schema_from_json``) for nonstandard file
layouts.
"""

from __future__ import annotations

from .dataio import CATEGORICAL, DROP, LABEL, NUMERIC, Column, FeatureSchema

# NSL-KDD: 41 flow features (3 of them categorical), a text label, and the
# trailing difficulty score. Files are headerless; names follow the dataset's
# published field list.
NSL_KDD_PROTOCOLS = ("icmp", "tcp", "udp")

NSL_KDD_SERVICES = (
    "IRC", "X11", "Z39_50", "aol", "auth", "bgp", "courier", "csnet_ns",
    "ctf", "daytime", "discard", "domain", "domain_u", "echo", "eco_i",
    "ecr_i", "efs", "exec", "finger", "ftp", "ftp_data", "gopher", "harvest",
    "hostnames", "http", "http_2784", "http_443", "http_8001", "imap4",
    "iso_tsap", "klogin", "kshell", "ldap", "link", "login", "mtp", "name",
    "netbios_dgm", "netbios_ns", "netbios_ssn", "netstat", "nnsp", "nntp",
    "ntp_u", "other", "pm_dump", "pop_2", "pop_3", "printer", "private",
    "red_i", "remote_job", "rje", "shell", "smtp", "sql_net", "ssh",
    "sunrpc", "supdup", "systat", "telnet", "tftp_u", "tim_i", "time",
    "urh_i", "urp_i", "uucp", "uucp_path", "vmnet", "whois",
)

NSL_KDD_FLAGS = (
    "OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH",
)

_NSL_KDD_NUMERIC = (
    "src_bytes", "dst_bytes", "land", "wrong_fragment", "urgent", "hot",
    "num_failed_logins", "logged_in", "num_compromised", "root_shell",
    "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login",
    "is_guest_login", "count", "srv_count", "serror_rate", "srv_serror_rate",
    "rerror_rate", "srv_rerror_rate", "same_srv_rate", "diff_srv_rate",
    "srv_diff_host_rate", "dst_host_count", "dst_host_srv_count",
    "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
    "dst_host_serror_rate", "dst_host_srv_serror_rate",
    "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
)


def nsl_kdd_schema() -> FeatureSchema:
    columns = [
        Column("duration", NUMERIC),
        Column("protocol_type", CATEGORICAL, NSL_KDD_PROTOCOLS),
        Column("service", CATEGORICAL, NSL_KDD_SERVICES),
        Column("flag", CATEGORICAL, NSL_KDD_FLAGS),
    ]
    columns += [Column(name, NUMERIC) for name in _NSL_KDD_NUMERIC]
    columns.append(Column("label", LABEL))
    columns.append(Column("difficulty", DROP))
    schema = FeatureSchema(tuple(columns))
    assert len(schema.feature_names()) == 41
    return schema


# CICIDS2017: identifier columns (flow id, endpoints, timestamp) are dropped;
# the protocol number plus 77 flow statistics remain, giving 78 features.
# 'Fwd Header Length.1' is the dataset's duplicated column as mangled by the
# CSV parser. Header whitespace is trimmed at parse time, so these names
# match both the labelled-flows and the ML-CVE file variants; drop columns
# absent from a variant are ignored.
_CICIDS2017_IDENTIFIERS = (
    "Flow ID", "Source IP", "Source Port", "Destination IP",
    "Destination Port", "Timestamp",
)

_CICIDS2017_FEATURES = (
    "Protocol", "Flow Duration", "Total Fwd Packets", "Total Backward Packets",
    "Total Length of Fwd Packets", "Total Length of Bwd Packets",
    "Fwd Packet Length Max", "Fwd Packet Length Min", "Fwd Packet Length Mean",
    "Fwd Packet Length Std", "Bwd Packet Length Max", "Bwd Packet Length Min",
    "Bwd Packet Length Mean", "Bwd Packet Length Std", "Flow Bytes/s",
    "Flow Packets/s", "Flow IAT Mean", "Flow IAT Std", "Flow IAT Max",
    "Flow IAT Min", "Fwd IAT Total", "Fwd IAT Mean", "Fwd IAT Std",
    "Fwd IAT Max", "Fwd IAT Min", "Bwd IAT Total", "Bwd IAT Mean",
    "Bwd IAT Std", "Bwd IAT Max", "Bwd IAT Min", "Fwd PSH Flags",
    "Bwd PSH Flags", "Fwd URG Flags", "Bwd URG Flags", "Fwd Header Length",
    "Bwd Header Length", "Fwd Packets/s", "Bwd Packets/s",
    "Min Packet Length", "Max Packet Length", "Packet Length Mean",
    "Packet Length Std", "Packet Length Variance", "FIN Flag Count",
    "SYN Flag Count", "RST Flag Count", "PSH Flag Count", "ACK Flag Count",
    "URG Flag Count", "CWE Flag Count", "ECE Flag Count", "Down/Up Ratio",
    "Average Packet Size", "Avg Fwd Segment Size", "Avg Bwd Segment Size",
    "Fwd Header Length.1", "Fwd Avg Bytes/Bulk", "Fwd Avg Packets/Bulk",
    "Fwd Avg Bulk Rate", "Bwd Avg Bytes/Bulk", "Bwd Avg Packets/Bulk",
    "Bwd Avg Bulk Rate", "Subflow Fwd Packets", "Subflow Fwd Bytes",
    "Subflow Bwd Packets", "Subflow Bwd Bytes", "Init_Win_bytes_forward",
    "Init_Win_bytes_backward", "act_data_pkt_fwd", "min_seg_size_forward",
    "Active Mean", "Active Std", "Active Max", "Active Min", "Idle Mean",
    "Idle Std", "Idle Max", "Idle Min",
)


def cicids2017_schema() -> FeatureSchema:
    columns = [Column(name, DROP) for name in _CICIDS2017_IDENTIFIERS]
    columns += [Column(name, NUMERIC) for name in _CICIDS2017_FEATURES]
    columns.append(Column("Label", LABEL))
    schema = FeatureSchema(tuple(columns))
    assert len(schema.feature_names()) == 78
    return schema


BUNDLED_SCHEMAS = {
    "nsl-kdd": nsl_kdd_schema,
    "cicids2017": cicids2017_schema,
}
