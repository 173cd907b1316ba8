import { z } from "zod";

export const candidateSchema = z.object({
  label: z.string(),
  posterior: z.number(),
  representatives: z.array(z.string()),
});

export const recordFieldsSchema = z.object({
  title: z.string(),
  coauthors: z.array(z.string()),
  venue: z.string(),
  year: z.number().int(),
});

export const queryViewSchema = z.object({
  record_id: z.string(),
  index: z.number().int(),
  entropy: z.number(),
  threshold: z.number(),
  seconds_remaining: z.number().nullable(),
  record: recordFieldsSchema.nullable(),
  candidates: z.array(candidateSchema),
});

export const metricsSchema = z.object({
  records_seen: z.number().int(),
  distinct_predicted: z.number().int(),
  queries: z.object({
    issued: z.number().int(),
    answered: z.number().int(),
    skipped: z.number().int(),
  }),
  mean_f1: z.number().nullable(),
  enp: z.number().nullable(),
});

export type Candidate = z.infer<typeof candidateSchema>;
export type RecordFields = z.infer<typeof recordFieldsSchema>;
export type QueryView = z.infer<typeof queryViewSchema>;
export type Metrics = z.infer<typeof metricsSchema>;

export const labelAckSchema = z.object({
  index: z.number().int(),
  label: z.string(),
  accepted: z.boolean(),
});

export type LabelAck = z.infer<typeof labelAckSchema>;
