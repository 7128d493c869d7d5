"""Matplotlib figure rendering for the report paths (train history,
distance-bucketed F1, token contribution shading)."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_history(history, path):
    epochs = [h["epoch"] for h in history]
    losses = [h["train_loss"] for h in history]
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(epochs, losses, color="tab:blue", label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:blue")
    dev = [(h["epoch"], h["dev_f1"]) for h in history if h["dev_f1"] is not None]
    if dev:
        ax2 = ax1.twinx()
        ax2.plot([e for e, _ in dev], [f for _, f in dev],
                 color="tab:orange", label="dev F1")
        ax2.set_ylabel("dev F1", color="tab:orange")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_buckets(buckets, path):
    """Bar chart of F1 per entity-distance bucket."""
    keys = list(buckets)
    f1s = [buckets[k]["f1"] for k in keys]
    counts = [buckets[k]["count"] for k in keys]
    fig, ax = plt.subplots(figsize=(7, 4))
    bars = ax.bar(range(len(keys)), f1s, color="tab:green")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys)
    ax.set_xlabel("distance between entities (tokens)")
    ax.set_ylabel("F1")
    ax.set_ylim(0, 1.05)
    for bar, c in zip(bars, counts):
        ax.text(bar.get_x() + bar.get_width() / 2, bar.get_height() + 0.02,
                f"n={c}", ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_token_contributions(tokens, counts, kept, path, title=None):
    """Tokens laid out in order, shaded by pooling contribution count.

    Pruned-out tokens are drawn hollow.
    """
    counts = np.asarray(counts, dtype=float)
    top = counts.max() if counts.max() > 0 else 1.0
    cmap = plt.get_cmap("Blues")
    fig, ax = plt.subplots(figsize=(max(4, 0.9 * len(tokens)), 1.6))
    for i, tok in enumerate(tokens):
        shade = cmap(0.15 + 0.8 * counts[i] / top) if kept[i] else "white"
        edge = "black" if kept[i] else "gray"
        ax.add_patch(plt.Rectangle((i, 0), 0.92, 1, facecolor=shade,
                                   edgecolor=edge))
        ax.text(i + 0.46, 0.62, tok, ha="center", va="center", fontsize=9,
                rotation=0)
        ax.text(i + 0.46, 0.22, str(int(counts[i])), ha="center",
                va="center", fontsize=7, color="dimgray")
    ax.set_xlim(0, len(tokens))
    ax.set_ylim(0, 1)
    ax.axis("off")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_label_histogram(label_counts, path):
    labels = sorted(label_counts, key=label_counts.get, reverse=True)
    fig, ax = plt.subplots(figsize=(max(5, 0.5 * len(labels)), 4))
    ax.bar(range(len(labels)), [label_counts[l] for l in labels],
           color="tab:purple")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("examples")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
