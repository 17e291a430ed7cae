// DTOs exactly as the daemon serves them. The console holds no authority:
// everything rendered is reproducible from these responses.

export interface PricingDto {
  amount_minor: number;
  currency: string;
  unit: string;
}

export interface ManifestDto {
  id: string;
  kind: string;
  name: string;
  description: {
    identification: { name: string; version: string } | null;
    function: string;
    provider_info: { provider_id: string; contact: string } | null;
    pricing: PricingDto | null;
    nonfunctional: Record<string, unknown>;
    technical_requirements: Record<string, unknown>;
  };
  license: { tag: string; replication_allowed_to: number | null };
  dependencies: { target: string; mode: string }[];
}

export interface EntryDto {
  entry_id: string;
  object: ManifestDto;
  provider: string;
  directory: string;
  advertised_as: string;
  payload_ref: string | null;
  trust: number | null;
}

export interface DirectoryDto {
  id: string;
  endpoint: string;
  kind: string;
  parent: string | null;
  trust: number | null;
  entries: EntryDto[];
  mirrored: boolean;
}

export interface ReplicaDto {
  object_id: string;
  provider_id: string;
  uri: string;
  commit_id: string | null;
  state: string;
  digest: string | null;
}

export interface OwnedObjectDto {
  object: ManifestDto;
  owner: string | null;
  heads: string[];
  replicas: ReplicaDto[];
}

export interface StatusDto {
  owner: string;
  objects: number;
  directories: number;
  providers: number;
  contracts: number;
  replicas: number;
  plans: number;
  last_seq: number;
  context: { storage_contracts: number; compute_contracts: number };
}

export interface ActivityEventDto {
  seq: number;
  timestamp: number;
  command_id: string;
  subject: string;
  outcome: string;
  details: Record<string, unknown>;
}

export interface GapMarkerDto {
  gap: true;
  dropped: number;
  before_seq?: number;
}

export interface CommandErrorDto {
  type: string;
  message: string;
}

export interface CommandResultDto {
  command_id: string;
  verb: string;
  ok: boolean;
  result: unknown;
  error?: CommandErrorDto;
}

export interface ApiSnapshot {
  objects: OwnedObjectDto[];
  directories: DirectoryDto[];
  status: StatusDto | null;
}
