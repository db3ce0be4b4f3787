/** Review session state: annotation drafts, dirty tracking, flag triage.

State is reconstructible from the API alone; the only client-side additions
are the draft being edited, its dirty flag, and the cursor. Residuals and
metrics pass through untouched (display only).
*/

import type { ApiClient } from "./api.js";
import type { DistanceClass, ReferenceClass, ReviewItem } from "./types.js";

export interface Draft {
  reference: ReferenceClass | null;
  distance: DistanceClass;
}

export interface UiSampleView {
  item: ReviewItem;
  draft: Draft;
  dirty: boolean;
  saving: boolean;
  error: string | null;
}

function viewOf(item: ReviewItem): UiSampleView {
  return {
    item,
    draft: {
      reference: item.annotation?.reference ?? null,
      distance: item.annotation?.distance ?? "close_up",
    },
    dirty: false,
    saving: false,
    error: null,
  };
}

export class ReviewSession {
  views: UiSampleView[];
  cursor = 0;
  /** Server-provided threshold; the client never decides outlierness itself. */
  readonly outlierThresholdCm: number;

  constructor(items: ReviewItem[], outlierThresholdCm = 2.0) {
    this.views = items.map(viewOf);
    this.outlierThresholdCm = outlierThresholdCm;
  }

  get current(): UiSampleView | null {
    return this.views[this.cursor] ?? null;
  }

  get annotatedCount(): number {
    return this.views.filter((v) => v.item.annotation !== null).length;
  }

  get complete(): boolean {
    return this.views.length > 0 && this.views.every((v) => v.item.annotation !== null);
  }

  get dirtyCount(): number {
    return this.views.filter((v) => v.dirty).length;
  }

  setReference(reference: ReferenceClass): void {
    const view = this.current;
    if (!view) return;
    view.draft.reference = reference;
    view.dirty = true;
    view.error = null;
  }

  toggleDistance(): void {
    const view = this.current;
    if (!view) return;
    view.draft.distance = view.draft.distance === "close_up" ? "distant" : "close_up";
    view.dirty = true;
    view.error = null;
  }

  next(): void {
    if (this.cursor < this.views.length - 1) this.cursor += 1;
  }

  prev(): void {
    if (this.cursor > 0) this.cursor -= 1;
  }

  /** Move to the next sample without a saved annotation; false if none left. */
  seekUnannotated(from: number = this.cursor + 1): boolean {
    const n = this.views.length;
    for (let step = 0; step < n; step += 1) {
      const index = (from + step) % n;
      if (this.views[index].item.annotation === null) {
        this.cursor = index;
        return true;
      }
    }
    return false;
  }

  /** PUT the current draft; on success mark clean and advance. */
  async confirm(api: ApiClient): Promise<boolean> {
    const view = this.current;
    if (!view || view.saving) return false;
    if (view.draft.reference === null) {
      view.error = "pick a reference class first";
      return false;
    }
    view.saving = true;
    try {
      const saved = await api.putAnnotation(view.item.sample_id, {
        reference: view.draft.reference,
        distance: view.draft.distance,
      });
      view.item.annotation = saved;
      view.dirty = false;
      view.error = null;
      this.seekUnannotated();
      return true;
    } catch (error) {
      // stays dirty; the draft is the retry affordance
      view.error = error instanceof Error ? error.message : String(error);
      return false;
    } finally {
      view.saving = false;
    }
  }

  /** Toggle the re-run flag on the current sample via the API. */
  async flagCurrent(api: ApiClient): Promise<boolean> {
    const view = this.current;
    if (!view) return false;
    try {
      const result = await api.toggleFlag(view.item.sample_id);
      view.item.flagged = result.flagged;
      view.error = null;
      return true;
    } catch (error) {
      view.error = error instanceof Error ? error.message : String(error);
      return false;
    }
  }
}
